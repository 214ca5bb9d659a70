#pragma once

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "taco/error.hpp"
#include "taco/metrics.hpp"

namespace taco {

struct Rgb {
  uint8_t r = 0, g = 0, b = 0;
};

class Canvas {
 public:
  Canvas(int64_t w, int64_t h, Rgb bg = {255, 255, 255}) : w_(w), h_(h) {
    TACO_CHECK(w >= 1 && h >= 1, UsageError, "canvas must be non-empty");
    px_.resize(static_cast<size_t>(w * h * 3));
    fill(bg);
  }
  int64_t width() const { return w_; }
  int64_t height() const { return h_; }

  void fill(Rgb c) {
    for (int64_t i = 0; i < w_ * h_; ++i) put(i, c);
  }
  void set(int64_t x, int64_t y, Rgb c) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    put(y * w_ + x, c);
  }
  void vspan(int64_t x, int64_t y0, int64_t y1, Rgb c) {
    if (y0 > y1) std::swap(y0, y1);
    for (int64_t y = y0; y <= y1; ++y) set(x, y, c);
  }
  void line(int64_t x0, int64_t y0, int64_t x1, int64_t y1, Rgb c) {
    const int64_t dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int64_t sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int64_t err = dx + dy;
    while (true) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int64_t e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  // 3x5 glyphs for axis labels: digits plus - . e +
  void text(int64_t x, int64_t y, const std::string& s, Rgb c) {
    for (char ch : s) {
      const uint16_t bits = glyph(ch);
      for (int row = 0; row < 5; ++row)
        for (int col = 0; col < 3; ++col)
          if (bits >> (row * 3 + col) & 1) set(x + col, y + row, c);
      x += 4;
    }
  }

  void save_png(const std::string& path) const {
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(h_ * (1 + w_ * 3)));
    for (int64_t y = 0; y < h_; ++y) {
      raw.push_back(0);  // filter: none
      const uint8_t* row = px_.data() + y * w_ * 3;
      raw.insert(raw.end(), row, row + w_ * 3);
    }
    uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> z(zlen);
    TACO_CHECK(compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()),
                         9) == Z_OK,
               NumericError, "png: deflate failed");
    z.resize(zlen);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    TACO_CHECK(f.good(), DataError, "cannot write png: " + path);
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    f.write(reinterpret_cast<const char*>(sig), 8);

    uint8_t ihdr[13];
    put_be32(ihdr, static_cast<uint32_t>(w_));
    put_be32(ihdr + 4, static_cast<uint32_t>(h_));
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 2;   // rgb
    ihdr[10] = ihdr[11] = ihdr[12] = 0;
    write_chunk(f, "IHDR", ihdr, 13);
    write_chunk(f, "IDAT", z.data(), z.size());
    write_chunk(f, "IEND", nullptr, 0);
    TACO_CHECK(f.good(), DataError, "png write failed: " + path);
  }

 private:
  void put(int64_t i, Rgb c) {
    px_[static_cast<size_t>(3 * i)] = c.r;
    px_[static_cast<size_t>(3 * i + 1)] = c.g;
    px_[static_cast<size_t>(3 * i + 2)] = c.b;
  }
  static void put_be32(uint8_t* p, uint32_t v) {
    p[0] = static_cast<uint8_t>(v >> 24);
    p[1] = static_cast<uint8_t>(v >> 16);
    p[2] = static_cast<uint8_t>(v >> 8);
    p[3] = static_cast<uint8_t>(v);
  }
  static void write_chunk(std::ofstream& f, const char* type, const uint8_t* data,
                          size_t len) {
    uint8_t head[8];
    put_be32(head, static_cast<uint32_t>(len));
    std::memcpy(head + 4, type, 4);
    f.write(reinterpret_cast<const char*>(head), 8);
    if (len) f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(len));
    uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(type), 4);
    if (len) crc = crc32(crc, data, static_cast<uInt>(len));
    uint8_t tail[4];
    put_be32(tail, static_cast<uint32_t>(crc));
    f.write(reinterpret_cast<const char*>(tail), 4);
  }
  static uint16_t glyph(char c) {
    // bit (row*3+col), rows top to bottom
    switch (c) {
      case '0': return 0b111101101101111;
      case '1': return 0b111010010011010;
      case '2': return 0b111001111100111;
      case '3': return 0b111100111100111;
      case '4': return 0b100100111101101;
      case '5': return 0b111100111001111;
      case '6': return 0b111101111001111;
      case '7': return 0b010010010100111;
      case '8': return 0b111101111101111;
      case '9': return 0b111100111101111;
      case '-': return 0b000000111000000;
      case '.': return 0b010000000000000;
      case '+': return 0b000010111010000;
      case 'e': return 0b111001110101010;
      default: return 0;
    }
  }

  int64_t w_, h_;
  std::vector<uint8_t> px_;
};

struct Series {
  std::string name;
  std::vector<double> x, y;
};

namespace detail {
inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}
}  // namespace detail

// Per-seed curves plus a mean +- std band when all series share an x grid.
inline void render_curves(const std::vector<Series>& series,
                          const std::string& out_png, int64_t width = 640,
                          int64_t height = 400) {
  TACO_CHECK(!series.empty(), UsageError, "render_curves: no series");
  for (const auto& s : series)
    TACO_CHECK(s.x.size() == s.y.size() && !s.x.empty(), UsageError,
               "render_curves: malformed series");

  double x0 = series[0].x.front(), x1 = x0, y0 = series[0].y.front(), y1 = y0;
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (x1 == x0) x1 = x0 + 1.0;
  const double pad = (y1 - y0) * 0.08;
  y0 -= pad > 0 ? pad : 1.0;
  y1 += pad > 0 ? pad : 1.0;

  const int64_t ml = 56, mr = 12, mt = 12, mb = 28;
  Canvas cv(width, height);
  const auto px = [&](double x) {
    return ml + static_cast<int64_t>(std::lround((x - x0) / (x1 - x0) * (width - ml - mr - 1)));
  };
  const auto py = [&](double y) {
    return height - mb -
           static_cast<int64_t>(std::lround((y - y0) / (y1 - y0) * (height - mt - mb - 1)));
  };

  bool shared_grid = true;
  for (const auto& s : series)
    if (s.x != series[0].x) shared_grid = false;

  if (shared_grid && series.size() >= 2) {
    const size_t n = series[0].x.size();
    std::vector<double> mean(n, 0.0), sd(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
      for (const auto& s : series) mean[i] += s.y[i];
      mean[i] /= static_cast<double>(series.size());
      for (const auto& s : series) sd[i] += (s.y[i] - mean[i]) * (s.y[i] - mean[i]);
      sd[i] = std::sqrt(sd[i] / static_cast<double>(series.size()));
    }
    const Rgb band{205, 222, 244};
    for (size_t i = 0; i + 1 < n; ++i) {
      const int64_t xa = px(series[0].x[i]), xb = px(series[0].x[i + 1]);
      for (int64_t x = xa; x <= xb; ++x) {
        const double t = xb == xa ? 0.0
                                  : static_cast<double>(x - xa) / static_cast<double>(xb - xa);
        const double m = mean[i] + t * (mean[i + 1] - mean[i]);
        const double d = sd[i] + t * (sd[i + 1] - sd[i]);
        cv.vspan(x, py(m + d), py(m - d), band);
      }
    }
    const Rgb mc{30, 78, 160};
    for (size_t i = 0; i + 1 < n; ++i)
      cv.line(px(series[0].x[i]), py(mean[i]), px(series[0].x[i + 1]), py(mean[i + 1]), mc);
  }

  const Rgb seed_color{150, 170, 200};
  for (const auto& s : series)
    for (size_t i = 0; i + 1 < s.x.size(); ++i)
      cv.line(px(s.x[i]), py(s.y[i]), px(s.x[i + 1]), py(s.y[i + 1]), seed_color);

  const Rgb axis{40, 40, 40};
  cv.line(ml, mt, ml, height - mb, axis);
  cv.line(ml, height - mb, width - mr, height - mb, axis);
  for (int t = 0; t <= 4; ++t) {
    const double xv = x0 + (x1 - x0) * t / 4.0;
    const double yv = y0 + (y1 - y0) * t / 4.0;
    cv.line(px(xv), height - mb, px(xv), height - mb + 3, axis);
    cv.text(px(xv) - 8, height - mb + 6, detail::tick_label(xv), axis);
    cv.line(ml - 3, py(yv), ml, py(yv), axis);
    cv.text(4, py(yv) - 2, detail::tick_label(yv), axis);
  }
  cv.save_png(out_png);
}

// Learning-curve figure for a set of finished runs (their metrics.csv files).
inline void plot_runs(const std::vector<std::string>& run_dirs,
                      const std::string& out_png) {
  TACO_CHECK(!run_dirs.empty(), UsageError, "plot: no run directories given");
  std::vector<Series> series;
  for (const auto& dir : run_dirs) {
    auto rows = MetricsLog::read(dir + "/metrics.csv");
    TACO_CHECK(!rows.empty(), DataError, "plot: empty metrics log in " + dir);
    Series s;
    s.name = dir;
    for (const auto& r : rows) {
      s.x.push_back(static_cast<double>(r.frame));
      s.y.push_back(r.eval_return);
    }
    series.push_back(std::move(s));
  }
  render_curves(series, out_png);
}

}  // namespace taco
