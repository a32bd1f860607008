#pragma once

#include <string>
#include <string_view>

namespace roomgraph {

std::string sha256_hex(std::string_view bytes);
/// Content address of a blob: "sha256:<hex>".
std::string content_ref(std::string_view bytes);

std::string base64_encode(std::string_view bytes);
/// Throws Error(kUnparseable) on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace roomgraph
