#include "winmatch/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace winmatch {

namespace {

// Skips whitespace and '#' comment lines between PNM header tokens.
int next_header_int(std::istream& in, const std::string& path) {
  int ch = in.peek();
  while (ch == '#' || std::isspace(ch)) {
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else {
      in.get();
    }
    ch = in.peek();
  }
  int value = 0;
  if (!(in >> value)) throw IoError("malformed PNM header in " + path);
  return value;
}

unsigned char to_byte(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<unsigned char>(std::lround(c * 255.0));
}

}  // namespace

Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '5')
    throw IoError(path + " is not a binary PGM (P5) file");
  const int w = next_header_int(in, path);
  const int h = next_header_int(in, path);
  const int maxval = next_header_int(in, path);
  if (w <= 0 || h <= 0 || maxval != 255)
    throw IoError(path + ": unsupported PGM geometry or depth");
  in.get();  // single whitespace byte after the header

  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw IoError(path + ": truncated pixel data");

  Image im = Image::zeros(h, w);
  for (std::size_t i = 0; i < raw.size(); ++i) im.px[i] = raw[i] / 255.0;
  return im;
}

void write_pgm(const Image& im, const std::string& path) {
  if (im.h <= 0 || im.w <= 0) throw ParamError("write_pgm: empty image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P5\n" << im.w << " " << im.h << "\n255\n";
  std::vector<unsigned char> raw(im.px.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = to_byte(im.px[i]);
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("failed writing " + path);
}

void write_match_overlay(const Image& a, const Image& b,
                         const std::vector<FineMatch>& matches,
                         const std::string& path) {
  if (a.h != b.h) throw ShapeError("overlay: images must share height");
  const int h = a.h, w = a.w + b.w;
  std::vector<unsigned char> rgb(static_cast<std::size_t>(h) * w * 3);
  auto put = [&](int r, int c, unsigned char cr, unsigned char cg, unsigned char cb) {
    if (r < 0 || c < 0 || r >= h || c >= w) return;
    const std::size_t k = (static_cast<std::size_t>(r) * w + c) * 3;
    rgb[k] = cr;
    rgb[k + 1] = cg;
    rgb[k + 2] = cb;
  };
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < a.w; ++c) {
      const unsigned char g = to_byte(a.at(r, c));
      put(r, c, g, g, g);
    }
    for (int c = 0; c < b.w; ++c) {
      const unsigned char g = to_byte(b.at(r, c));
      put(r, a.w + c, g, g, g);
    }
  }

  auto line = [&](int x0, int y0, int x1, int y1, unsigned char cr, unsigned char cg,
                  unsigned char cb) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy, x = x0, y = y0;
    while (true) {
      put(y, x, cr, cg, cb);
      if (x == x1 && y == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y += sy;
      }
    }
  };

  for (const FineMatch& m : matches) {
    if (m.confidence <= 0.3) continue;
    const bool strong = m.confidence > 0.5;
    line(static_cast<int>(m.ax), static_cast<int>(m.ay),
         a.w + static_cast<int>(m.bx), static_cast<int>(m.by),
         strong ? 0 : 255, strong ? 255 : 0, 0);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P6\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()),
            static_cast<std::streamsize>(rgb.size()));
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace winmatch
