#pragma once

#include <string>

namespace cfspn::io {

/// Reads a whole file; throws std::runtime_error when it cannot be opened.
std::string read_file(const std::string& path);

/// Writes through a temporary file in the same directory and renames it
/// over the target, so readers never observe a half-written file.
void atomic_write_file(const std::string& path, const std::string& content);

} // namespace cfspn::io
