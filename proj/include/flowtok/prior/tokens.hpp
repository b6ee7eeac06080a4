// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

// Token files: one record per line, `id<TAB>code code code...`, codes in
// decimal. Lines are written in the given order and end with '\n'.
namespace flowtok::prior {

struct TokenRecord {
    std::string id;
    std::vector<std::int64_t> codes;
    friend bool operator==(const TokenRecord&, const TokenRecord&) = default;
};

std::string format_tokens(const std::vector<TokenRecord>& records);
// Throws UserError naming the line on malformed input, duplicate ids, or a
// code outside [0, codebook) when a codebook size is given.
std::vector<TokenRecord> parse_tokens(const std::string& text, std::optional<std::size_t> codebook = std::nullopt);

void write_tokens(const std::filesystem::path& path, const std::vector<TokenRecord>& records);
std::vector<TokenRecord> read_tokens(const std::filesystem::path& path, std::optional<std::size_t> codebook = std::nullopt);

}  // namespace flowtok::prior
