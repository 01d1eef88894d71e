#include "rotraman/tableio.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace rotraman {

std::string format_double(double x) {
  if (x == 0.0) x = 0.0;  // collapse -0
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), x,
                           std::chars_format::scientific, 16);
  return std::string(buf, res.ptr);
}

std::string render_table(const ObservableSeries& series) {
  const bool with_se = !series.se.empty();
  std::string out =
      "t\tjx\tjy\tjz\tvar_jx\tvar_jy\tvar_jz\tj2\tpurity\ttrace\tleakage";
  if (with_se)
    out +=
        "\tse_jx\tse_jy\tse_jz\tse_var_jx\tse_var_jy\tse_var_jz\tse_j2"
        "\tse_purity";
  out += '\n';
  for (std::size_t i = 0; i < series.rows.size(); ++i) {
    const auto& r = series.rows[i];
    out += format_double(r.t);
    for (double v : {r.jx, r.jy, r.jz, r.var_jx, r.var_jy, r.var_jz, r.jsq,
                     r.purity, r.trace, r.leakage}) {
      out += '\t';
      out += format_double(v);
    }
    if (with_se) {
      const auto& s = series.se[i];
      for (double v : {s.jx, s.jy, s.jz, s.var_jx, s.var_jy, s.var_jz, s.jsq,
                       s.purity}) {
        out += '\t';
        out += format_double(v);
      }
    }
    out += '\n';
  }
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace rotraman
