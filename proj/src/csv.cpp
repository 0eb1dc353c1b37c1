#include "rfggd/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <system_error>

namespace rfggd::csv {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) v = 0.0;  // drop the sign of -0
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void Writer::header(const std::vector<std::string>& names) {
  for (const auto& n : names) field(std::string_view(n));
  end_row();
}

void Writer::sep() {
  if (row_started_) os_ << ',';
  row_started_ = true;
}

Writer& Writer::field(double v) {
  sep();
  os_ << format_double(v);
  return *this;
}

Writer& Writer::field(Index v) {
  sep();
  os_ << v;
  return *this;
}

Writer& Writer::field(std::string_view s) {
  sep();
  os_ << s;
  return *this;
}

Writer& Writer::fields(const Vec& v) {
  for (Index i = 0; i < v.size(); ++i) field(v(i));
  return *this;
}

Writer& Writer::empty() {
  sep();
  return *this;
}

void Writer::end_row() {
  os_ << '\n';
  row_started_ = false;
}

void write_atomic(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + tmp.string() + " for writing");
    body(os);
    os.flush();
    if (!os) throw Error("write to " + tmp.string() + " failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace rfggd::csv
