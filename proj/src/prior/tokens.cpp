// SPDX-License-Identifier: Apache-2.0
#include "flowtok/prior/tokens.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "flowtok/error.hpp"

namespace flowtok::prior {

std::string format_tokens(const std::vector<TokenRecord>& records) {
    std::ostringstream os;
    for (const auto& r : records) {
        if (r.id.empty() || r.id.find_first_of("\t\n") != std::string::npos) {
            throw UserError("token record id '" + r.id + "' is empty or contains a tab/newline");
        }
        os << r.id << '\t';
        for (std::size_t i = 0; i < r.codes.size(); ++i) os << (i ? " " : "") << r.codes[i];
        os << '\n';
    }
    return os.str();
}

std::vector<TokenRecord> parse_tokens(const std::string& text, std::optional<std::size_t> codebook) {
    std::vector<TokenRecord> out;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fail = [&](const std::string& why) {
            throw UserError("tokens line " + std::to_string(lineno) + ": " + why);
        };
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) fail("expected 'id<TAB>codes'");
        TokenRecord r{line.substr(0, tab), {}};
        if (!seen.insert(r.id).second) fail("duplicate id '" + r.id + "'");
        std::istringstream codes(line.substr(tab + 1));
        std::string tok;
        while (codes >> tok) {
            std::int64_t v = 0;
            const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec != std::errc{} || p != tok.data() + tok.size()) fail("bad code '" + tok + "'");
            if (v < 0 || (codebook && static_cast<std::size_t>(v) >= *codebook)) {
                fail("code " + tok + " outside the codebook");
            }
            r.codes.push_back(v);
        }
        if (r.codes.empty()) fail("record '" + r.id + "' has no codes");
        out.push_back(std::move(r));
    }
    return out;
}

void write_tokens(const std::filesystem::path& path, const std::vector<TokenRecord>& records) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw UserError("cannot write " + path.string());
    f << format_tokens(records);
    if (!f) throw UserError("failed writing " + path.string());
}

std::vector<TokenRecord> read_tokens(const std::filesystem::path& path, std::optional<std::size_t> codebook) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw UserError("cannot read " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    try {
        return parse_tokens(ss.str(), codebook);
    } catch (const UserError& e) {
        throw UserError(path.string() + ": " + e.what());
    }
}

}  // namespace flowtok::prior
