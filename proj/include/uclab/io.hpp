#pragma once

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "uclab/common.hpp"
#include "uclab/geometry.hpp"
#include "uclab/grid.hpp"

namespace uclab {

using Json = nlohmann::ordered_json;

// Writes via a temp file in the same directory, then renames into place.
inline void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path dir = path.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), Errc::io_error, "cannot open " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(out.good(), Errc::io_error, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io_error, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// %.17g round-trips doubles and is locale-independent via snprintf
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Sequence JSON: {d, M, delta, window, centers: [[k...],[z...]] ...}

inline Json sequence_to_json(const EquidistributedSequence& Z) {
  Json j;
  j["d"] = Z.dim();
  j["M"] = Z.M();
  j["delta"] = Z.delta();
  j["window"] = {{"lo", Z.window().lo}, {"hi", Z.window().hi}};
  Json centers = Json::array();
  Z.window().for_each([&](const std::vector<int>& k) {
    centers.push_back(Json::array({k, Z.center(k)}));
  });
  j["centers"] = std::move(centers);
  return j;
}

inline EquidistributedSequence sequence_from_json(const Json& j) {
  const int d = j.at("d").get<int>();
  const double M = j.at("M").get<double>();
  const double delta = j.at("delta").get<double>();
  IndexBox window(j.at("window").at("lo").get<std::vector<int>>(),
                  j.at("window").at("hi").get<std::vector<int>>());
  std::vector<double> offsets(static_cast<std::size_t>(window.count()) * d, 0.0);
  for (const auto& entry : j.at("centers")) {
    auto k = entry.at(0).get<std::vector<int>>();
    auto z = entry.at(1).get<std::vector<double>>();
    require(window.contains(k), Errc::bad_config, "center outside window");
    const std::size_t base = static_cast<std::size_t>(window.flat(k)) * d;
    for (int i = 0; i < d; ++i) offsets[base + i] = z[i] - M * k[i];
  }
  return EquidistributedSequence(d, M, delta, window, std::move(offsets));
}

// ---------------------------------------------------------------------------
// Mask export: binary PGM (0/255) plus a JSON sidecar. 1D masks are a 1-pixel
// strip; 3D masks export the middle slice along the first axis.

inline std::string mask_to_pgm(const Mask& mask) {
  const Grid& g = mask.grid;
  require(g.d >= 1 && g.d <= 3, Errc::invalid_parameter, "PGM export supports d <= 3");
  std::int64_t width = g.n, height = g.d >= 2 ? g.n : 1;
  std::ostringstream out;
  out << "P5\n" << width << " " << height << "\n255\n";
  const std::int64_t slice = g.d == 3 ? (g.n / 2) * g.n * g.n : 0;
  for (std::int64_t row = 0; row < height; ++row)
    for (std::int64_t col = 0; col < width; ++col) {
      std::int64_t f = g.d == 1 ? col : slice + row * g.n + col;
      out.put(mask.indicator[static_cast<std::size_t>(f)] ? static_cast<char>(255)
                                                          : static_cast<char>(0));
    }
  return out.str();
}

inline Json mask_sidecar(const Mask& mask, const EquidistributedSequence& Z) {
  Json j;
  j["d"] = mask.grid.d;
  j["n"] = mask.grid.n;
  j["L"] = mask.grid.L;
  j["M"] = Z.M();
  j["delta"] = Z.delta();
  j["covered_fraction"] = mask.covered_fraction;
  return j;
}

// ---------------------------------------------------------------------------
// Flat binary field format: magic, little-endian header {d, dtype, n per axis,
// L}, then row-major float64 values (re,im interleaved for complex).

inline constexpr char kFieldMagic[8] = {'U', 'C', 'L', 'F', 'L', 'D', '0', '1'};

namespace detail {
template <class T>
void put_le(std::string& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.append(reinterpret_cast<char*>(b), sizeof(T));
}
template <class T>
T get_le(const std::string& in, std::size_t& pos) {
  require(pos + sizeof(T) <= in.size(), Errc::io_error, "truncated field file");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}
}  // namespace detail

template <class Scalar>
inline std::string field_to_bytes(const FieldT<Scalar>& field) {
  std::string out;
  out.append(kFieldMagic, sizeof(kFieldMagic));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(field.grid.d));
  detail::put_le<std::uint32_t>(out, std::is_same_v<Scalar, double> ? 0u : 1u);
  for (int i = 0; i < field.grid.d; ++i)
    detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(field.grid.n));
  detail::put_le<double>(out, field.grid.L);
  for (std::int64_t f = 0; f < field.values.size(); ++f) {
    if constexpr (std::is_same_v<Scalar, double>) {
      detail::put_le<double>(out, field.values[f]);
    } else {
      detail::put_le<double>(out, field.values[f].real());
      detail::put_le<double>(out, field.values[f].imag());
    }
  }
  return out;
}

inline Field field_from_bytes(const std::string& bytes) {
  require(bytes.size() >= sizeof(kFieldMagic) &&
              std::memcmp(bytes.data(), kFieldMagic, sizeof(kFieldMagic)) == 0,
          Errc::io_error, "bad field magic");
  std::size_t pos = sizeof(kFieldMagic);
  const auto d = detail::get_le<std::uint32_t>(bytes, pos);
  const auto dtype = detail::get_le<std::uint32_t>(bytes, pos);
  require(dtype == 0, Errc::io_error, "expected real field");
  std::uint64_t n = 0;
  for (std::uint32_t i = 0; i < d; ++i) {
    auto ni = detail::get_le<std::uint64_t>(bytes, pos);
    if (i == 0) n = ni;
    require(ni == n, Errc::io_error, "anisotropic grids not supported");
  }
  const double L = detail::get_le<double>(bytes, pos);
  Grid grid(static_cast<int>(d), L, static_cast<std::int64_t>(n));
  Field field(grid);
  for (std::int64_t f = 0; f < field.values.size(); ++f)
    field.values[f] = detail::get_le<double>(bytes, pos);
  return field;
}

// ---------------------------------------------------------------------------
// Minimal SVG log-log plot: observed ratios as circles, bound as a line.

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool line = true;
  std::string color = "#1f77b4";
};

inline std::string render_loglog_svg(const std::vector<PlotSeries>& series,
                                     const std::string& xlabel, const std::string& ylabel) {
  const double W = 640, Hh = 480, ml = 70, mr = 20, mt = 20, mb = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (s.x[i] <= 0 || s.y[i] <= 0) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (xmin > xmax) { xmin = 0.1; xmax = 1.0; }
  if (ymin > ymax) { ymin = 0.1; ymax = 1.0; }
  const double lx0 = std::log10(xmin), lx1 = std::log10(xmax * 1.0001);
  const double ly0 = std::log10(ymin), ly1 = std::log10(ymax * 1.0001);
  auto sx = [&](double x) {
    return ml + (std::log10(x) - lx0) / std::max(1e-12, lx1 - lx0) * (W - ml - mr);
  };
  auto sy = [&](double y) {
    return Hh - mb - (std::log10(y) - ly0) / std::max(1e-12, ly1 - ly0) * (Hh - mt - mb);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hh
      << "\" viewBox=\"0 0 " << W << " " << Hh << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << (W - ml - mr)
      << "\" height=\"" << (Hh - mt - mb)
      << "\" fill=\"none\" stroke=\"#888\" stroke-width=\"1\"/>\n";

  // decade ticks
  for (int e = static_cast<int>(std::floor(lx0)); e <= static_cast<int>(std::ceil(lx1)); ++e) {
    const double x = std::pow(10.0, e);
    if (x < xmin || x > xmax) continue;
    svg << "<line x1=\"" << sx(x) << "\" y1=\"" << (Hh - mb) << "\" x2=\"" << sx(x)
        << "\" y2=\"" << (Hh - mb + 6) << "\" stroke=\"#444\"/>\n";
    svg << "<text x=\"" << sx(x) << "\" y=\"" << (Hh - mb + 22)
        << "\" font-size=\"12\" text-anchor=\"middle\">1e" << e << "</text>\n";
  }
  for (int e = static_cast<int>(std::floor(ly0)); e <= static_cast<int>(std::ceil(ly1)); ++e) {
    const double y = std::pow(10.0, e);
    if (y < ymin || y > ymax) continue;
    svg << "<line x1=\"" << (ml - 6) << "\" y1=\"" << sy(y) << "\" x2=\"" << ml << "\" y2=\""
        << sy(y) << "\" stroke=\"#444\"/>\n";
    svg << "<text x=\"" << (ml - 10) << "\" y=\"" << (sy(y) + 4)
        << "\" font-size=\"12\" text-anchor=\"end\">1e" << e << "</text>\n";
  }
  svg << "<text x=\"" << (W / 2) << "\" y=\"" << (Hh - 10)
      << "\" font-size=\"13\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  svg << "<text x=\"15\" y=\"" << (Hh / 2)
      << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 15 " << (Hh / 2)
      << ")\">" << ylabel << "</text>\n";

  double ly = mt + 16;
  for (const auto& s : series) {
    if (s.line && s.x.size() > 1) {
      svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (s.x[i] <= 0 || s.y[i] <= 0) continue;
        svg << sx(s.x[i]) << "," << sy(s.y[i]) << " ";
      }
      svg << "\"/>\n";
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (s.x[i] <= 0 || s.y[i] <= 0) continue;
      svg << "<circle cx=\"" << sx(s.x[i]) << "\" cy=\"" << sy(s.y[i])
          << "\" r=\"3\" fill=\"" << s.color << "\"/>\n";
    }
    svg << "<text x=\"" << (W - mr - 8) << "\" y=\"" << ly
        << "\" font-size=\"12\" text-anchor=\"end\" fill=\"" << s.color << "\">" << s.label
        << "</text>\n";
    ly += 16;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace uclab
