#pragma once

#include <filesystem>
#include <istream>
#include <sstream>
#include <string>

namespace sfsm {

/// Shortest round-trip text for a double (17 significant digits).
std::string fmt17(double v);

/// Writes the whole string or throws IoError.
void write_text_file(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

/// Line cursor for the text formats; skips blank lines and reports line numbers.
class LineReader {
 public:
  LineReader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

  bool has_line();
  std::string next_line();
  [[noreturn]] void fail(const std::string& why) const;
  /// Fails if anything but whitespace remains in the stream.
  void expect_end(std::istringstream& ls) const;

 private:
  std::istream& in_;
  std::string what_;
  std::string pending_;
  bool has_pending_ = false;
  int line_no_ = 0;
};

}  // namespace sfsm
