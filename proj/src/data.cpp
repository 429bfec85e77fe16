#include "pfpn/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "pfpn/image_io.hpp"
#include "pfpn/layers.hpp"

namespace pfpn {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct ShapeDraw {
  ShapeKind kind;
  double cy, cx;      // center, pixels
  double ry, rx;      // radii / half-extents, pixels
  double angle;       // rotation
  double wobble_a, wobble_p1, wobble_b, wobble_p2;  // blob modulation
};

bool inside_shape(const ShapeDraw& s, double y, double x) {
  const double dy = y - s.cy, dx = x - s.cx;
  const double ca = std::cos(s.angle), sa = std::sin(s.angle);
  const double u = ca * dx + sa * dy;
  const double v = -sa * dx + ca * dy;
  switch (s.kind) {
    case ShapeKind::kRectangle:
      return std::abs(u) <= s.rx && std::abs(v) <= s.ry;
    case ShapeKind::kEllipse:
      return (u * u) / (s.rx * s.rx) + (v * v) / (s.ry * s.ry) <= 1.0;
    case ShapeKind::kBlob: {
      const double phi = std::atan2(v / s.ry, u / s.rx);
      const double mod = 1.0 + s.wobble_a * std::sin(3.0 * phi + s.wobble_p1) +
                         s.wobble_b * std::sin(5.0 * phi + s.wobble_p2);
      const double r2 = (u * u) / (s.rx * s.rx) + (v * v) / (s.ry * s.ry);
      return r2 <= mod * mod;
    }
  }
  return false;
}

ShapeDraw draw_shape(const SyntheticSpec& spec, Rng& rng) {
  std::vector<ShapeKind> kinds(spec.shapes.begin(), spec.shapes.end());
  ShapeDraw s;
  s.kind = kinds[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<int>(kinds.size()) - 1))];
  const double sz = spec.canvas_size;
  s.cy = rng.uniform(0.28, 0.72) * sz;
  s.cx = rng.uniform(0.28, 0.72) * sz;
  s.ry = rng.uniform(0.09, 0.20) * sz;
  s.rx = rng.uniform(0.09, 0.20) * sz;
  s.angle = rng.uniform(0.0, kPi);
  s.wobble_a = rng.uniform(0.15, 0.30);
  s.wobble_p1 = rng.uniform(0.0, 2.0 * kPi);
  s.wobble_b = rng.uniform(0.05, 0.18);
  s.wobble_p2 = rng.uniform(0.0, 2.0 * kPi);
  return s;
}

}  // namespace

Sample synthetic_sample(const SyntheticSpec& spec, int index) {
  Rng rng(Rng::derive(spec.seed, static_cast<std::uint64_t>(index)));
  const int sz = spec.canvas_size;
  Sample out;
  out.id = "synth_" + std::string(5 - std::min<std::size_t>(
                                          5, std::to_string(index).size()),
                                  '0') +
           std::to_string(index);
  out.image = Tensor<double>(1, 3, sz, sz);
  out.mask = GroundTruthMask::Zero(sz, sz);

  // Smooth background: bilinear blend of four corner colors.
  double corner[4][3];
  for (auto& c : corner) {
    for (double& v : c) v = rng.uniform(0.15, 0.85);
  }
  for (int y = 0; y < sz; ++y) {
    const double ty = double(y) / double(sz - 1);
    for (int x = 0; x < sz; ++x) {
      const double tx = double(x) / double(sz - 1);
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - tx) * corner[0][c] + tx * corner[1][c];
        const double bot = (1 - tx) * corner[2][c] + tx * corner[3][c];
        out.image.at(0, c, y, x) = (1 - ty) * top + ty * bot;
      }
    }
  }

  // Clutter: soft low-contrast ellipses plus pixel noise, both scaled by the
  // clutter level so level 0 leaves the gradient untouched.
  const int n_clutter = static_cast<int>(std::lround(spec.clutter_level * 10.0));
  for (int i = 0; i < n_clutter; ++i) {
    const double cy = rng.uniform(0.0, 1.0) * sz;
    const double cx = rng.uniform(0.0, 1.0) * sz;
    const double ry = rng.uniform(0.06, 0.22) * sz;
    const double rx = rng.uniform(0.06, 0.22) * sz;
    const double amp = rng.uniform(0.10, 0.26) * (rng.bernoulli(0.5) ? 1 : -1);
    double tint[3];
    for (double& t : tint) t = rng.uniform(0.7, 1.3);
    for (int y = 0; y < sz; ++y) {
      for (int x = 0; x < sz; ++x) {
        const double d2 = ((y - cy) / ry) * ((y - cy) / ry) +
                          ((x - cx) / rx) * ((x - cx) / rx);
        if (d2 >= 1.0) continue;
        const double w = (1.0 - d2) * (1.0 - d2);
        for (int c = 0; c < 3; ++c) {
          double& v = out.image.at(0, c, y, x);
          v = std::clamp(v + amp * tint[c] * w, 0.02, 0.98);
        }
      }
    }
  }

  // Foreground: 1-3 high-contrast shapes; retry until the mask fraction
  // lands in [0.02, 0.6], falling back to a centered ellipse.
  const double bg_mean =
      (out.image.plane(0, 0).mean() + out.image.plane(0, 1).mean() +
       out.image.plane(0, 2).mean()) /
      3.0;
  const double dir = bg_mean <= 0.5 ? 1.0 : -1.0;
  const double mag = rng.uniform(0.40, 0.52);
  double fg_color[3];
  for (double& v : fg_color) {
    v = std::clamp(bg_mean + dir * mag + rng.uniform(-0.06, 0.06), 0.02, 0.98);
  }

  for (int attempt = 0; attempt < 12; ++attempt) {
    out.mask.setZero();
    std::vector<ShapeDraw> shapes;
    const int n_shapes = rng.uniform_int(1, 3);
    for (int i = 0; i < n_shapes; ++i) shapes.push_back(draw_shape(spec, rng));
    std::int64_t fg = 0;
    for (int y = 0; y < sz; ++y) {
      for (int x = 0; x < sz; ++x) {
        for (const auto& s : shapes) {
          if (inside_shape(s, y + 0.5, x + 0.5)) {
            out.mask(y, x) = 1;
            ++fg;
            break;
          }
        }
      }
    }
    const double frac = double(fg) / double(sz) / double(sz);
    if (frac >= 0.02 && frac <= 0.6) break;
    if (attempt == 11) {
      out.mask.setZero();
      ShapeDraw fallback{ShapeKind::kEllipse, 0.5 * sz, 0.5 * sz,
                         0.15 * sz,           0.15 * sz, 0.0,
                         0,                   0,         0,
                         0};
      for (int y = 0; y < sz; ++y) {
        for (int x = 0; x < sz; ++x) {
          if (inside_shape(fallback, y + 0.5, x + 0.5)) out.mask(y, x) = 1;
        }
      }
    }
  }

  for (int y = 0; y < sz; ++y) {
    for (int x = 0; x < sz; ++x) {
      if (!out.mask(y, x)) continue;
      const double texture = spec.clutter_level * rng.uniform(-0.05, 0.05);
      for (int c = 0; c < 3; ++c) {
        out.image.at(0, c, y, x) =
            std::clamp(fg_color[c] + texture, 0.02, 0.98);
      }
    }
  }

  if (spec.clutter_level > 0) {
    for (int y = 0; y < sz; ++y) {
      for (int x = 0; x < sz; ++x) {
        const double noise = spec.clutter_level * rng.uniform(-0.04, 0.04);
        for (int c = 0; c < 3; ++c) {
          double& v = out.image.at(0, c, y, x);
          v = std::clamp(v + noise, 0.0, 1.0);
        }
      }
    }
  }
  return out;
}

std::vector<Sample> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<Sample> out;
  out.reserve(spec.num_samples);
  for (int i = 0; i < spec.num_samples; ++i) {
    out.push_back(synthetic_sample(spec, i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

Tensor<double> resize_image_bilinear(const Tensor<double>& image, Index out_h,
                                     Index out_w) {
  return upsample_bilinear(image, out_h, out_w);
}

GroundTruthMask resize_mask_nearest(const GroundTruthMask& mask, Index out_h,
                                    Index out_w) {
  GroundTruthMask out(out_h, out_w);
  const Index in_h = mask.rows(), in_w = mask.cols();
  for (Index y = 0; y < out_h; ++y) {
    Index sy = static_cast<Index>(
        std::floor((double(y) + 0.5) * double(in_h) / double(out_h)));
    sy = std::clamp(sy, Index(0), in_h - 1);
    for (Index x = 0; x < out_w; ++x) {
      Index sx = static_cast<Index>(
          std::floor((double(x) + 0.5) * double(in_w) / double(out_w)));
      sx = std::clamp(sx, Index(0), in_w - 1);
      out(y, x) = mask(sy, sx);
    }
  }
  return out;
}

AugmentDraw draw_augment(Rng& rng, int resize_to, int crop) {
  AugmentDraw d;
  d.off_y = rng.uniform_int(0, resize_to - crop);
  d.off_x = rng.uniform_int(0, resize_to - crop);
  d.flip = rng.bernoulli(0.5);
  return d;
}

Sample apply_augment(const Sample& s, int resize_to, int crop,
                     const AugmentDraw& draw) {
  if (crop > resize_to) {
    throw std::invalid_argument("augment: crop larger than resized image");
  }
  if (draw.off_y < 0 || draw.off_x < 0 || draw.off_y > resize_to - crop ||
      draw.off_x > resize_to - crop) {
    throw std::invalid_argument("augment: crop offset out of range");
  }
  Tensor<double> resized = resize_image_bilinear(s.image, resize_to, resize_to);
  GroundTruthMask rmask = resize_mask_nearest(s.mask, resize_to, resize_to);
  Sample out;
  out.id = s.id;
  out.image = Tensor<double>(1, 3, crop, crop);
  out.mask = GroundTruthMask(crop, crop);
  for (int y = 0; y < crop; ++y) {
    for (int x = 0; x < crop; ++x) {
      const int sx = draw.flip ? crop - 1 - x : x;
      for (int c = 0; c < 3; ++c) {
        out.image.at(0, c, y, x) =
            resized.at(0, c, draw.off_y + y, draw.off_x + sx);
      }
      out.mask(y, x) = rmask(draw.off_y + y, draw.off_x + sx);
    }
  }
  // nearest-neighbor keeps the mask binary; enforce the contract anyway
  out.mask = (out.mask != 0).cast<std::uint8_t>();
  return out;
}

Sample augment_train(const Sample& s, int resize_to, int crop, Rng& rng) {
  return apply_augment(s, resize_to, crop, draw_augment(rng, resize_to, crop));
}

// ---------------------------------------------------------------------------
// Disk formats
// ---------------------------------------------------------------------------

namespace {

Tensor<double> image_to_tensor(const ImageU8& img) {
  Tensor<double> t(1, 3, img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const int sc = img.channels == 1 ? 0 : c;
        t.at(0, c, y, x) = img.at(y, x, sc) / 255.0;
      }
    }
  }
  return t;
}

}  // namespace

std::vector<Sample> load_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  const fs::path img_dir = root / "images";
  const fs::path mask_dir = root / "masks";
  if (!fs::is_directory(img_dir)) {
    throw std::invalid_argument("dataset: missing directory " + img_dir.string());
  }
  std::map<std::string, fs::path> images;
  for (const auto& entry : fs::directory_iterator(img_dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") {
      images.emplace(entry.path().stem().string(), entry.path());
    }
  }
  if (images.empty()) {
    throw std::invalid_argument("dataset: no images under " + img_dir.string());
  }
  std::vector<Sample> out;
  for (const auto& [stem, img_path] : images) {
    const fs::path mask_path = mask_dir / (stem + ".png");
    if (!fs::exists(mask_path)) {
      throw std::invalid_argument("dataset: no mask for image '" + stem +
                                  "' (expected " + mask_path.string() + ")");
    }
    Sample s;
    s.id = stem;
    s.image = image_to_tensor(read_image(img_path));
    const ImageU8 m = read_image(mask_path);
    s.mask = GroundTruthMask(m.height, m.width);
    for (int y = 0; y < m.height; ++y) {
      for (int x = 0; x < m.width; ++x) {
        s.mask(y, x) = m.at(y, x, 0) >= 128 ? 1 : 0;
      }
    }
    if (s.mask.rows() != s.image.h() || s.mask.cols() != s.image.w()) {
      throw std::invalid_argument("dataset: image/mask size mismatch for '" +
                                  stem + "'");
    }
    out.push_back(std::move(s));
  }
  return out;
}

Tensor<double> normalize_image(const Tensor<double>& image,
                               const std::array<double, 3>& mean,
                               const std::array<double, 3>& stddev) {
  Tensor<double> out = image;
  for (Index n = 0; n < image.n(); ++n) {
    for (int c = 0; c < 3; ++c) {
      out.plane(n, c) = (image.plane(n, c) - mean[c]) / stddev[c];
    }
  }
  return out;
}

PreparedInput prepare_test(const Sample& s, int input_size,
                           const std::array<double, 3>& mean,
                           const std::array<double, 3>& stddev) {
  PreparedInput out;
  out.orig_width = static_cast<int>(s.image.w());
  out.orig_height = static_cast<int>(s.image.h());
  out.image = normalize_image(
      resize_image_bilinear(s.image, input_size, input_size), mean, stddev);
  return out;
}

void write_sample(const Sample& s, const std::filesystem::path& image_path,
                  const std::filesystem::path& mask_path) {
  const int h = static_cast<int>(s.image.h());
  const int w = static_cast<int>(s.image.w());
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        rgb[(std::size_t(y) * w + x) * 3 + c] = static_cast<std::uint8_t>(
            std::lround(std::clamp(s.image.at(0, c, y, x), 0.0, 1.0) * 255.0));
      }
    }
  }
  write_png_rgb(image_path, rgb.data(), w, h);
  std::vector<std::uint8_t> m(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      m[std::size_t(y) * w + x] = s.mask(y, x) ? 255 : 0;
    }
  }
  write_png_gray(mask_path, m.data(), w, h);
}

SaliencyMap load_saliency_png(const std::filesystem::path& path) {
  const ImageU8 img = read_image(path);
  SaliencyMap out(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      out(y, x) = img.at(y, x, 0) / 255.0;
    }
  }
  return out;
}

void write_saliency_png(const std::filesystem::path& path,
                        const SaliencyMap& map) {
  const int h = static_cast<int>(map.rows());
  const int w = static_cast<int>(map.cols());
  std::vector<std::uint8_t> gray(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      gray[std::size_t(y) * w + x] = static_cast<std::uint8_t>(
          std::lround(std::clamp(map(y, x), 0.0, 1.0) * 255.0));
    }
  }
  write_png_gray(path, gray.data(), w, h);
}

}  // namespace pfpn
