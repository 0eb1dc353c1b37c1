#pragma once

#include "rfggd/common.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace rfggd::csv {

/// Shortest round-trip decimal representation ('.' separator, no locale).
std::string format_double(double v);

/// Comma-separated writer; numbers go through format_double so output is
/// byte-stable for identical inputs.
class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void header(const std::vector<std::string>& names);
  Writer& field(double v);
  Writer& field(Index v);
  Writer& field(int v) { return field(static_cast<Index>(v)); }
  Writer& field(std::string_view s);
  Writer& field(const char* s) { return field(std::string_view(s)); }
  Writer& fields(const Vec& v);
  Writer& empty();
  void end_row();

 private:
  void sep();
  std::ostream& os_;
  bool row_started_ = false;
};

/// Write through a temporary file in the same directory, then rename.
void write_atomic(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body);

}  // namespace rfggd::csv
