#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>

#include <fmt/format.h>

namespace qsm::cli {

/// Decimal, at most 9 significant digits (printf %.9g).
inline std::string num(double v) { return fmt::format("{:.9g}", v); }

/// Accumulates comma-separated rows in memory.
class Csv {
 public:
  explicit Csv(std::string_view header) { text_.append(header).push_back('\n'); }

  template <class... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((append_cell(cells, first)), ...);
    text_.push_back('\n');
    ++rows_;
  }

  const std::string& text() const { return text_; }
  std::size_t rows() const { return rows_; }

 private:
  void separator(bool& first) {
    if (!first) text_.push_back(',');
    first = false;
  }
  void append_cell(double v, bool& first) { separator(first); text_ += num(v); }
  void append_cell(int v, bool& first) { separator(first); text_ += std::to_string(v); }
  void append_cell(long v, bool& first) { separator(first); text_ += std::to_string(v); }
  void append_cell(std::size_t v, bool& first) { separator(first); text_ += std::to_string(v); }
  void append_cell(std::string_view v, bool& first) { separator(first); text_.append(v); }
  void append_cell(const std::string& v, bool& first) { separator(first); text_.append(v); }
  void append_cell(const char* v, bool& first) { separator(first); text_.append(v); }

  std::string text_;
  std::size_t rows_ = 0;
};

/// Writes `content` to a sibling temp file, then renames it over `path`.
inline void write_atomically(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    os.flush();
    if (!os) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("cannot move " + tmp.string() + " to " + path.string());
}

}  // namespace qsm::cli
