#pragma once

#include <string>
#include <string_view>

namespace qpattern {

/// Lower-case hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);
/// SHA-256 of a file's contents; IoError if it cannot be read.
std::string sha256_file(const std::string& path);

}  // namespace qpattern
