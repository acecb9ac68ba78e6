#pragma once

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>

#include "bspft/bytes.hpp"
#include "bspft/error.hpp"

namespace bspft {

namespace detail {

inline Error io_error(const std::string& what, const std::filesystem::path& p) {
  return Error(ErrorCode::IoFailure, what + " " + p.string() + ": " + std::strerror(errno));
}

class FileDescriptor {
 public:
  explicit FileDescriptor(int fd) : fd_(fd) {}
  ~FileDescriptor() {
    if (fd_ >= 0) ::close(fd_);
  }
  FileDescriptor(const FileDescriptor&) = delete;
  FileDescriptor& operator=(const FileDescriptor&) = delete;

  int get() const noexcept { return fd_; }
  int release() noexcept { return std::exchange(fd_, -1); }

 private:
  int fd_;
};

inline void write_all(int fd, ByteView data, const std::filesystem::path& p) {
  std::size_t done = 0;
  while (done < data.size()) {
    ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw io_error("write", p);
    }
    done += static_cast<std::size_t>(n);
  }
}

inline void fsync_directory(const std::filesystem::path& dir) {
  FileDescriptor fd(::open(dir.c_str(), O_RDONLY | O_DIRECTORY));
  if (fd.get() < 0) throw io_error("open directory", dir);
  if (::fsync(fd.get()) != 0 && errno != EINVAL) throw io_error("fsync directory", dir);
}

}  // namespace detail

// Called with the temp path after its bytes are durable and before the rename.
// Throwing from it aborts the commit and leaves the temp file in place, which
// is exactly what a crash at that point looks like on disk.
using BeforeRenameHook = std::function<void(const std::filesystem::path& temp_path)>;

// Publishes `data` under `target` all-or-nothing: write <target>.tmp, fsync,
// rename over the final name, fsync the directory.
inline void write_file_atomically(const std::filesystem::path& target, ByteView data,
                                  const BeforeRenameHook& before_rename = {}) {
  std::filesystem::path temp = target;
  temp += ".tmp";
  {
    detail::FileDescriptor fd(::open(temp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644));
    if (fd.get() < 0) throw detail::io_error("open", temp);
    detail::write_all(fd.get(), data, temp);
    if (::fsync(fd.get()) != 0) throw detail::io_error("fsync", temp);
    if (::close(fd.release()) != 0) throw detail::io_error("close", temp);
  }
  if (before_rename) before_rename(temp);
  if (::rename(temp.c_str(), target.c_str()) != 0) {
    auto err = detail::io_error("rename", temp);
    std::error_code ec;
    std::filesystem::remove(temp, ec);
    throw err;
  }
  auto dir = target.parent_path();
  detail::fsync_directory(dir.empty() ? std::filesystem::path(".") : dir);
}

inline Bytes read_file(const std::filesystem::path& path) {
  detail::FileDescriptor fd(::open(path.c_str(), O_RDONLY | O_CLOEXEC));
  if (fd.get() < 0) throw detail::io_error("open", path);
  Bytes out;
  std::uint8_t buf[1 << 16];
  for (;;) {
    ssize_t n = ::read(fd.get(), buf, sizeof buf);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw detail::io_error("read", path);
    }
    if (n == 0) break;
    out.insert(out.end(), buf, buf + n);
  }
  return out;
}

}  // namespace bspft
