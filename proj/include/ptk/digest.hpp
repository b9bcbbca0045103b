#ifndef PTK_DIGEST_HPP
#define PTK_DIGEST_HPP

#include <filesystem>
#include <string>
#include <string_view>

namespace ptk {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// SHA-256 of a file's content; throws ptk::Error when unreadable.
std::string sha256_file(const std::filesystem::path& path);

std::string base64_encode(std::string_view bytes);

/// Throws ptk::Error on malformed input.
std::string base64_decode(std::string_view text);

/// Whole-file read; throws ptk::Error when unreadable.
std::string read_file(const std::filesystem::path& path);

/// Writes via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace ptk

#endif  // PTK_DIGEST_HPP
