// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The claimscope Authors

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace claimscope::text {

// NFC-normalizes UTF-8 input. Throws Error(kInvalidArgument) on malformed
// UTF-8.
std::string nfc(std::string_view utf8);

// NFC followed by trimming of leading/trailing whitespace. This is the text
// every Document stores, hashes and indexes into.
std::string normalize_document(std::string_view utf8);

std::u32string to_u32(std::string_view utf8);
std::string to_utf8(std::u32string_view cps);

bool is_space(char32_t c);
bool is_upper(char32_t c);

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::string_view bytes);
std::string hex(const Digest& digest);
// Lowercase hex SHA-256 of the NFC form of `utf8`.
std::string content_hash(std::string_view utf8);

}  // namespace claimscope::text
