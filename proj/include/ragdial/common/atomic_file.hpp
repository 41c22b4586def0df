#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

namespace ragdial {

// Writes through a sibling temp file and renames it over `path` on success,
// so readers never observe a partially written artifact.
void write_file_atomic(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& writer,
                       bool binary = false);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace ragdial
