// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#include "c2e/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "c2e/errors.hpp"
#include "c2e/rng.hpp"

namespace fs = std::filesystem;

namespace {

constexpr size_t kSide = 32;
constexpr double kPi = 3.14159265358979323846;

using c2e::Image;
using c2e::Rng;

Image blank() {
  Image img;
  img.h = kSide;
  img.w = kSide;
  img.rgb.assign(kSide * kSide * 3, 0.0);
  return img;
}

// Band-limited noise fields sharing a dataset-level carrier: three common
// low-frequency waves (drawn once per dataset seed) plus smaller per-image
// waves, mapped affinely into (0,1). The shared carrier keeps masked-patch
// structure learnable at desk-scale step budgets while every image differs.
struct TextureCarrier {
  double fx[3], fy[3], phase[3], amp[3];
};

TextureCarrier texture_carrier(Rng& rng) {
  TextureCarrier c;
  for (int k = 0; k < 3; ++k) {
    c.fx[k] = (0.5 + rng.uniform() * 1.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    c.fy[k] = 0.5 + rng.uniform() * 1.5;
    c.phase[k] = rng.uniform() * 2.0 * kPi;
    c.amp[k] = 0.55 / (1.0 + k);
  }
  return c;
}

Image texture_image(const TextureCarrier& carrier, Rng& rng) {
  constexpr double kVarAmp = 0.12;
  Image img = blank();
  double vfx[2], vfy[2], vph[2];
  for (int k = 0; k < 2; ++k) {
    vfx[k] = (0.5 + rng.uniform()) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    vfy[k] = 0.5 + rng.uniform();
    vph[k] = rng.uniform() * 2.0 * kPi;
  }
  for (size_t c = 0; c < 3; ++c) {
    const double chroma = 0.7 + 0.6 * rng.uniform();
    for (size_t y = 0; y < kSide; ++y)
      for (size_t x = 0; x < kSide; ++x) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k)
          s += chroma * carrier.amp[k] *
               std::cos(2.0 * kPi * (carrier.fx[k] * x + carrier.fy[k] * y) / kSide +
                        carrier.phase[k]);
        for (int k = 0; k < 2; ++k)
          s += kVarAmp * std::cos(2.0 * kPi * (vfx[k] * x + vfy[k] * y) / kSide +
                                  vph[k] + static_cast<double>(c));
        img.at(y, x, c) = 0.5 + 0.26 * s;
      }
  }
  return img;
}

struct Palette {
  double bg0[3], bg1[3], fg[3];
};

Palette random_palette(Rng& rng) {
  Palette p;
  for (size_t c = 0; c < 3; ++c) {
    p.bg0[c] = 0.10 + rng.uniform() * 0.30;
    p.bg1[c] = 0.10 + rng.uniform() * 0.30;
    p.fg[c] = 0.55 + rng.uniform() * 0.40;
  }
  return p;
}

// Signed distance (positive inside) for the four probing shapes.
double shape_sdf(int cls, double x, double y, double cx, double cy, double r,
                 double angle) {
  const double dx = x - cx, dy = y - cy;
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double u = ca * dx + sa * dy;
  const double v = -sa * dx + ca * dy;
  switch (cls) {
    case 0:  // disk
      return r - std::sqrt(dx * dx + dy * dy);
    case 1:  // bar
      return std::min(r + 2.0 - std::abs(u), 2.2 - std::abs(v));
    case 2: {  // cross
      const double arm1 = std::min(r - std::abs(u), 2.2 - std::abs(v));
      const double arm2 = std::min(r - std::abs(v), 2.2 - std::abs(u));
      return std::max(arm1, arm2);
    }
    default:  // ring
      return 1.6 - std::abs(std::sqrt(dx * dx + dy * dy) - 0.8 * r);
  }
}

Image shape_image(int cls, Rng& rng) {
  Image img = blank();
  const Palette p = random_palette(rng);
  const double cx = 15.5 + (rng.uniform() - 0.5) * 8.0;
  const double cy = 15.5 + (rng.uniform() - 0.5) * 8.0;
  const double r = 6.0 + rng.uniform() * 3.0;
  const double angle = rng.uniform() * kPi;
  const bool horiz = rng.uniform() < 0.5;
  for (size_t y = 0; y < kSide; ++y)
    for (size_t x = 0; x < kSide; ++x) {
      const double t = (horiz ? x : y) / static_cast<double>(kSide - 1);
      const double sdf = shape_sdf(cls, x + 0.5, y + 0.5, cx, cy, r, angle);
      const double m = std::clamp(sdf, 0.0, 1.0);  // 1px anti-aliasing
      for (size_t c = 0; c < 3; ++c) {
        const double bg = p.bg0[c] + (p.bg1[c] - p.bg0[c]) * t;
        double v = bg + (p.fg[c] - bg) * m;
        v += (rng.uniform() - 0.5) * 0.01;
        img.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  return img;
}

// Phase p places a phase-specific glyph in a phase-specific image region;
// the palette is fixed per video and positions drift slowly over frames.
Image phase_image(int phase, const Palette& p, size_t frame, Rng& rng) {
  Image img = blank();
  const double drift = 2.0 * std::sin(0.35 * static_cast<double>(frame));
  double cx = 0.0, cy = 0.0, r = 0.0;
  int cls = 0;
  switch (phase) {
    case 0:
      cls = 0;  // disk upper-left
      cx = 9.0 + drift;
      cy = 9.0;
      r = 5.5;
      break;
    case 1:
      cls = 1;  // bar through the center
      cx = 15.5;
      cy = 15.5 + drift;
      r = 9.0;
      break;
    default:
      cls = 3;  // ring lower-right
      cx = 22.0 + drift;
      cy = 22.0;
      r = 6.5;
      break;
  }
  for (size_t y = 0; y < kSide; ++y)
    for (size_t x = 0; x < kSide; ++x) {
      const double t = y / static_cast<double>(kSide - 1);
      const double sdf = shape_sdf(cls, x + 0.5, y + 0.5, cx, cy, r,
                                   phase == 1 ? 0.3 : 0.0);
      const double m = std::clamp(sdf, 0.0, 1.0);
      for (size_t c = 0; c < 3; ++c) {
        const double bg = p.bg0[c] + (p.bg1[c] - p.bg0[c]) * t;
        double v = bg + (p.fg[c] - bg) * m;
        v += (rng.uniform() - 0.5) * 0.01;
        img.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  return img;
}

}  // namespace

namespace c2e {

ImageDataset synth_dataset(const std::string& kind, size_t n, uint64_t seed) {
  if (n == 0) throw ConfigError("synth: n must be >= 1");
  Rng base(seed);
  ImageDataset ds;

  if (kind == "textures") {
    Rng carrier_rng = base.derive(0xCA881E8);
    const TextureCarrier carrier = texture_carrier(carrier_rng);
    for (size_t i = 0; i < n; ++i) {
      Rng rng = base.derive(i);
      ds.images.push_back(texture_image(carrier, rng));
      ds.labels.push_back(0);
      ds.groups.push_back("-");
      char name[64];
      std::snprintf(name, sizeof name, "tex_%05zu.ppm", i);
      ds.paths.emplace_back(name);
    }
    return ds;
  }

  if (kind == "shapes") {
    for (size_t i = 0; i < n; ++i) {
      Rng rng = base.derive(i);
      const int cls = static_cast<int>(i % 4);
      ds.images.push_back(shape_image(cls, rng));
      ds.labels.push_back(cls);
      ds.groups.push_back("-");
      char name[64];
      std::snprintf(name, sizeof name, "shape_%05zu.ppm", i);
      ds.paths.emplace_back(name);
    }
    return ds;
  }

  if (kind == "phases") {
    const size_t videos = 10;
    const size_t frames = std::max<size_t>(1, n / videos);
    for (size_t v = 0; v < videos; ++v) {
      Rng vid_rng = base.derive(1000 + v);
      const Palette pal = random_palette(vid_rng);
      // phase boundaries near the thirds, jittered per video
      const size_t b1 = frames / 3 + vid_rng.uniform_below(std::max<size_t>(1, frames / 8));
      const size_t b2 =
          2 * frames / 3 + vid_rng.uniform_below(std::max<size_t>(1, frames / 8));
      for (size_t f = 0; f < frames; ++f) {
        Rng frame_rng = vid_rng.derive(f);
        const int phase = f < b1 ? 0 : (f < b2 ? 1 : 2);
        ds.images.push_back(phase_image(phase, pal, f, frame_rng));
        ds.labels.push_back(phase);
        char group[32];
        std::snprintf(group, sizeof group, "video%02zu", v);
        ds.groups.emplace_back(group);
        char name[64];
        std::snprintf(name, sizeof name, "%s/frame_%04zu.ppm", group, f);
        ds.paths.emplace_back(name);
      }
    }
    return ds;
  }

  throw ConfigError("synth: unknown kind \"" + kind +
                    "\" (expected textures|shapes|phases)");
}

void save_dataset(const ImageDataset& ds, const std::string& dir) {
  const fs::path base(dir);
  fs::create_directories(base);
  std::ofstream csv(base / "labels.csv");
  if (!csv) throw IoError("synth: cannot write labels.csv in " + dir);
  csv << "path,label,group\n";
  for (size_t i = 0; i < ds.size(); ++i) {
    const fs::path rel(ds.paths[i]);
    if (rel.has_parent_path()) fs::create_directories(base / rel.parent_path());
    write_ppm((base / rel).string(), ds.images[i]);
    csv << rel.string() << "," << ds.labels[i] << "," << ds.groups[i] << "\n";
  }
}

}  // namespace c2e
