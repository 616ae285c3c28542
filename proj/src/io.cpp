#include "sfsm/io.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

#include "sfsm/errors.hpp"

namespace sfsm {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << contents;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool LineReader::has_line() {
  if (has_pending_) return true;
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    pending_ = std::move(line);
    has_pending_ = true;
    return true;
  }
  return false;
}

std::string LineReader::next_line() {
  if (!has_line()) fail("unexpected end of file");
  has_pending_ = false;
  return std::move(pending_);
}

void LineReader::fail(const std::string& why) const {
  throw ParseError(what_ + ": line " + std::to_string(line_no_) + ": " + why);
}

void LineReader::expect_end(std::istringstream& ls) const {
  std::string extra;
  if (ls >> extra) fail("unexpected trailing field '" + extra + "'");
}

}  // namespace sfsm
