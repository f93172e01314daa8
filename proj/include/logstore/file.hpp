#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace logstore {

/// Owning POSIX file descriptor. Errors surface as IoError with errno text.
class File {
 public:
  enum class Mode { ReadOnly, ReadWrite, Append, Truncate };

  File() = default;
  File(const std::filesystem::path& path, Mode mode);
  ~File();

  File(File&& other) noexcept;
  File& operator=(File&& other) noexcept;
  File(const File&) = delete;
  File& operator=(const File&) = delete;

  bool is_open() const noexcept { return fd_ >= 0; }
  const std::filesystem::path& path() const noexcept { return path_; }

  /// Writes the whole buffer at the current position (append for Append mode).
  void write_all(std::string_view data);
  /// Reads up to n bytes at offset; returns what was available.
  std::string pread(std::uint64_t offset, std::size_t n) const;
  std::uint64_t size() const;
  void sync();
  void truncate(std::uint64_t size);
  void close();

 private:
  int fd_ = -1;
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);

/// Writes data to path.tmp, syncs, renames over path and syncs the directory.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

}  // namespace logstore
