// SPDX-License-Identifier: Apache-2.0
#include "flowtok/structio/pdb.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "flowtok/error.hpp"

namespace flowtok::io {

namespace {

std::string_view field(std::string_view line, std::size_t first, std::size_t last) {
    // 1-based inclusive column range, clipped to the line
    if (line.size() < first) return {};
    return line.substr(first - 1, std::min(last, line.size()) - first + 1);
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::optional<double> to_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::optional<int> to_int(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

struct Residue {
    int number = 0;
    char icode = ' ';
    std::string name;
    std::map<std::string, std::pair<Eigen::Vector3d, double>> atoms;  // name -> (xyz, B)
};

struct ChainAccum {
    std::string id;
    std::vector<Residue> residues;
};

struct SsRange {
    SsLabel label;
    char chain;
    int first, last;
};

[[noreturn]] void malformed(std::size_t line_no, const std::string& what) {
    throw UserError("PDB line " + std::to_string(line_no) + ": malformed ATOM record (" + what + ")");
}

}  // namespace

PdbReadResult parse_pdb(std::string_view text, const PdbReadOptions& options) {
    if (options.atoms != 1 && options.atoms != 3) throw UserError("PDB reader: atoms must be 1 or 3");
    std::vector<ChainAccum> chains;
    std::vector<SsRange> ss;
    std::map<std::string, std::size_t> chain_index;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        const std::string_view rec = field(line, 1, 6);
        if (rec == "ENDMDL" || trim(rec) == "END") break;
        if (rec == "HELIX " || rec == "SHEET ") {
            const bool helix = rec == "HELIX ";
            const auto first = to_int(helix ? field(line, 22, 25) : field(line, 23, 26));
            const auto last = to_int(helix ? field(line, 34, 37) : field(line, 34, 37));
            const std::string_view ch = helix ? field(line, 20, 20) : field(line, 22, 22);
            if (!first || !last || ch.empty()) {
                throw UserError("PDB line " + std::to_string(line_no) + ": malformed " + std::string(trim(rec)) +
                                " record");
            }
            ss.push_back({helix ? SsLabel::helix : SsLabel::strand, ch[0], *first, *last});
            continue;
        }
        if (rec != "ATOM  ") continue;
        if (line.size() < 54) malformed(line_no, "line shorter than 54 columns");
        const std::string atom(trim(field(line, 13, 16)));
        const char altloc = field(line, 17, 17)[0];
        if (altloc != ' ' && altloc != 'A') continue;
        const auto resseq = to_int(field(line, 23, 26));
        const auto x = to_double(field(line, 31, 38));
        const auto y = to_double(field(line, 39, 46));
        const auto z = to_double(field(line, 47, 54));
        if (!resseq) malformed(line_no, "residue number");
        if (!x || !y || !z) malformed(line_no, "coordinates");
        double bfactor = 0.0;
        if (line.size() >= 61) {
            const auto b = to_double(field(line, 61, 66));
            if (!b && !trim(field(line, 61, 66)).empty()) malformed(line_no, "B-factor");
            bfactor = b.value_or(0.0);
        }
        const std::string chain_id(1, field(line, 22, 22)[0]);
        const char icode = line.size() >= 27 ? line[26] : ' ';

        auto [it, inserted] = chain_index.try_emplace(chain_id, chains.size());
        if (inserted) chains.push_back({chain_id, {}});
        ChainAccum& ch = chains[it->second];
        if (ch.residues.empty() || ch.residues.back().number != *resseq || ch.residues.back().icode != icode) {
            ch.residues.push_back({*resseq, icode, std::string(trim(field(line, 18, 20))), {}});
        }
        ch.residues.back().atoms.emplace(atom, std::make_pair(Eigen::Vector3d(*x, *y, *z), bfactor));
    }

    PdbReadResult result;
    const bool multi = chains.size() > 1;
    for (const ChainAccum& ch : chains) {
        BackboneStructure s;
        s.id = options.id.empty() ? ch.id : (multi ? options.id + "_" + ch.id : options.id);
        s.chain_id = ch.id;
        s.atoms = options.atoms;

        bool gap = false;
        for (std::size_t i = 1; i < ch.residues.size(); ++i) {
            const int prev = ch.residues[i - 1].number, cur = ch.residues[i].number;
            if (cur > prev + 1) {
                result.issues.push_back({s.id, ch.id, "residue_gap",
                                         "numbering jumps from " + std::to_string(prev) + " to " + std::to_string(cur)});
                gap = true;
                break;
            }
        }
        if (gap) {
            result.rejected_chains.push_back(s.id);
            continue;
        }

        std::vector<Eigen::Vector3d> rows;
        std::vector<double> plddt;
        for (const Residue& r : ch.residues) {
            std::vector<std::string> need{"CA"};
            if (options.atoms == 3) need = {"N", "CA", "C"};
            std::string missing;
            for (const auto& a : need) {
                if (!r.atoms.count(a)) missing += (missing.empty() ? "" : ",") + a;
            }
            if (!missing.empty()) {
                result.issues.push_back({s.id, ch.id, "missing_atom",
                                         "residue " + r.name + " " + std::to_string(r.number) + " lacks " + missing});
                continue;
            }
            for (const auto& a : need) rows.push_back(r.atoms.at(a).first);
            s.residue_names.push_back(r.name);
            s.residue_numbers.push_back(r.number);
            plddt.push_back(r.atoms.at("CA").second);
        }
        if (s.residue_numbers.empty()) {
            result.issues.push_back({s.id, ch.id, "empty_chain", "no residue with the required backbone atoms"});
            result.rejected_chains.push_back(s.id);
            continue;
        }
        s.coords.resize(static_cast<Eigen::Index>(rows.size()), 3);
        for (std::size_t i = 0; i < rows.size(); ++i) s.coords.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
        if (options.read_plddt) s.plddt = plddt;
        if (!ss.empty()) {
            std::vector<SsLabel> labels(s.residue_numbers.size(), SsLabel::coil);
            for (const SsRange& r : ss) {
                if (std::string(1, r.chain) != ch.id) continue;
                for (std::size_t i = 0; i < labels.size(); ++i) {
                    if (s.residue_numbers[i] >= r.first && s.residue_numbers[i] <= r.last) labels[i] = r.label;
                }
            }
            s.ss_labels = std::move(labels);
        }
        s.validate();
        result.chains.push_back(std::move(s));
    }
    return result;
}

PdbReadResult read_pdb_file(const std::filesystem::path& path, PdbReadOptions options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UserError("cannot open PDB file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (options.id.empty()) options.id = path.stem().string();
    try {
        return parse_pdb(ss.str(), options);
    } catch (const UserError& e) {
        throw UserError(path.string() + ": " + e.what());
    }
}

namespace {

// Maximal runs of one label in the chain.
std::vector<std::tuple<SsLabel, std::size_t, std::size_t>> runs(const std::vector<SsLabel>& labels) {
    std::vector<std::tuple<SsLabel, std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < labels.size();) {
        std::size_t j = i;
        while (j + 1 < labels.size() && labels[j + 1] == labels[i]) ++j;
        if (labels[i] != SsLabel::coil) out.emplace_back(labels[i], i, j);
        i = j + 1;
    }
    return out;
}

void append_line(std::string& out, const char* buf) {
    out += buf;
    out += '\n';
}

}  // namespace

std::string write_pdb(const std::vector<BackboneStructure>& chains) {
    std::string out;
    char buf[96];
    int helix_serial = 0, strand_serial = 0;
    for (const auto& x : chains) {
        x.validate();
        if (!x.ss_labels) continue;
        const char chain = x.chain_id.empty() ? 'A' : x.chain_id[0];
        auto name = [&](std::size_t i) { return x.residue_names.empty() ? std::string("GLY") : x.residue_names[i]; };
        auto number = [&](std::size_t i) { return x.residue_numbers.empty() ? static_cast<int>(i) + 1 : x.residue_numbers[i]; };
        for (const auto& [label, a, b] : runs(*x.ss_labels)) {
            if (label == SsLabel::helix) {
                ++helix_serial;
                std::snprintf(buf, sizeof buf, "HELIX  %3d %3d %-3s %c %4d%c %-3s %c %4d%c%2d%30s %5d", helix_serial,
                              helix_serial, name(a).c_str(), chain, number(a), ' ', name(b).c_str(), chain, number(b),
                              ' ', 1, "", static_cast<int>(b - a + 1));
            } else {
                ++strand_serial;
                std::snprintf(buf, sizeof buf, "SHEET  %3d %3d%2d %-3s %c%4d%c %-3s %c%4d%c%2d", 1,
                              strand_serial % 1000, 1, name(a).c_str(), chain, number(a), ' ',
                              name(b).c_str(), chain, number(b), ' ', 0);
            }
            append_line(out, buf);
        }
    }
    int serial = 0;
    for (const auto& x : chains) {
        // %8.3f holds [-999.999, 9999.999]; anything else would shift columns.
        if (x.coords.size() && (!x.coords.allFinite() || x.coords.minCoeff() <= -999.9995 || x.coords.maxCoeff() >= 9999.9995)) {
            throw UserError("structure '" + x.id + "' has coordinates outside the PDB range [-999.999, 9999.999]");
        }
        const char chain = x.chain_id.empty() ? 'A' : x.chain_id[0];
        static const char* const kNames[3] = {" N  ", " CA ", " C  "};
        static const char* const kElements[3] = {"N", "C", "C"};
        const std::size_t n = x.length();
        for (std::size_t i = 0; i < n; ++i) {
            const std::string res = x.residue_names.empty() ? "GLY" : x.residue_names[i];
            const int num = x.residue_numbers.empty() ? static_cast<int>(i) + 1 : x.residue_numbers[i];
            const double b = x.plddt ? (*x.plddt)[i] : 0.0;
            for (int a = 0; a < x.atoms; ++a) {
                const int k = x.atoms == 3 ? a : 1;
                const auto row = x.coords.row(static_cast<Eigen::Index>(i) * x.atoms + a);
                std::snprintf(buf, sizeof buf, "ATOM  %5d %-4s%c%3s %c%4d%c   %8.3f%8.3f%8.3f%6.2f%6.2f          %2s%2s",
                              ++serial % 100000, kNames[k], ' ', res.c_str(), chain, num, ' ', row(0), row(1), row(2),
                              1.0, b, kElements[k], "");
                append_line(out, buf);
            }
        }
        const std::string last_res = x.residue_names.empty() ? "GLY" : x.residue_names.back();
        const int last_num = x.residue_numbers.empty() ? static_cast<int>(n) : x.residue_numbers.back();
        std::snprintf(buf, sizeof buf, "TER   %5d      %3s %c%4d", ++serial % 100000, last_res.c_str(), chain, last_num);
        append_line(out, buf);
    }
    out += "END\n";
    return out;
}

std::string write_pdb(const BackboneStructure& x) { return write_pdb(std::vector<BackboneStructure>{x}); }

void write_pdb_file(const std::filesystem::path& path, const BackboneStructure& x) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UserError("cannot write PDB file '" + path.string() + "'");
    out << write_pdb(x);
}

}  // namespace flowtok::io
