#pragma once

#include <string>

namespace synflood {

/// Writes content to path via a temp file + rename so readers never see
/// partial output. Throws std::runtime_error on I/O failure.
void atomic_write_file(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

}  // namespace synflood
