// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#include "dethub/data/image_io.hpp"

#include <cmath>
#include <fstream>
#include <vector>

#include "dethub/core/errors.hpp"

namespace dethub::data {

void write_ppm(const std::string& path, const Tensor& image_hwc) {
  if (image_hwc.ndim() != 3 || image_hwc.dim(2) != 3)
    throw ShapeError("write_ppm: expected [H,W,3], got " + image_hwc.shape_str());
  const int H = image_hwc.dim(0), W = image_hwc.dim(1);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path);
  f << "P6\n" << W << " " << H << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(W) * 3);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::min(1.0, std::max(0.0, image_hwc.at3(y, x, c)));
        row[static_cast<size_t>(x) * 3 + c] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw DataError("write failed: " + path);
}

Tensor read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open image: " + path);
  std::string magic;
  f >> magic;
  if (magic != "P6") throw DataError("not a P6 ppm: " + path);
  auto skip_ws_comments = [&]() {
    while (true) {
      int c = f.peek();
      if (c == '#') {
        std::string line;
        std::getline(f, line);
      } else if (std::isspace(c)) {
        f.get();
      } else {
        break;
      }
    }
  };
  int W = 0, H = 0, maxv = 0;
  skip_ws_comments();
  f >> W;
  skip_ws_comments();
  f >> H;
  skip_ws_comments();
  f >> maxv;
  f.get();  // single whitespace after header
  if (W <= 0 || H <= 0 || maxv != 255) throw DataError("unsupported ppm header: " + path);
  std::vector<unsigned char> buf(static_cast<size_t>(W) * H * 3);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw DataError("truncated ppm: " + path);
  Tensor img({H, W, 3});
  for (size_t i = 0; i < buf.size(); ++i) img[i] = buf[i] / 255.0;
  return img;
}

}  // namespace dethub::data
