// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#include "c2e/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "c2e/errors.hpp"

namespace fs = std::filesystem;

namespace c2e {

namespace {

// next whitespace-separated token, skipping '#' comment lines
std::string next_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return tok;
  }
  throw IoError("ppm: truncated header");
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("ppm: cannot open " + path);
  if (next_token(in) != "P6") throw IoError("ppm: not a P6 file: " + path);
  const size_t w = std::stoul(next_token(in));
  const size_t h = std::stoul(next_token(in));
  const unsigned maxval = static_cast<unsigned>(std::stoul(next_token(in)));
  if (maxval != 255) throw IoError("ppm: unsupported maxval in " + path);
  in.get();  // single whitespace after maxval

  Image img;
  img.h = h;
  img.w = w;
  img.rgb.resize(h * w * 3);
  std::vector<unsigned char> buf(h * w * 3);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<size_t>(in.gcount()) != buf.size())
    throw IoError("ppm: truncated pixel data in " + path);
  for (size_t i = 0; i < buf.size(); ++i) img.rgb[i] = buf[i] / 255.0;
  return img;
}

void write_ppm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("ppm: cannot write " + path);
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> buf(img.rgb.size());
  for (size_t i = 0; i < buf.size(); ++i) {
    const double v = std::clamp(img.rgb[i], 0.0, 1.0);
    buf[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("ppm: short write to " + path);
}

void write_pgm(const std::string& path, size_t h, size_t w,
               const std::vector<uint8_t>& gray) {
  if (gray.size() != h * w) throw IoError("pgm: buffer does not match dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("pgm: cannot write " + path);
  out << "P5\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(gray.data()),
            static_cast<std::streamsize>(gray.size()));
  if (!out) throw IoError("pgm: short write to " + path);
}

ImageDataset load_labeled_dir(const std::string& dir) {
  const fs::path base(dir);
  std::ifstream in(base / "labels.csv");
  if (!in) throw IoError("dataset: cannot open " + (base / "labels.csv").string());
  ImageDataset ds;
  std::string line;
  if (!std::getline(in, line)) throw IoError("dataset: empty labels.csv");
  if (line != "path,label,group")
    throw IoError("dataset: unexpected labels.csv header: " + line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cols = split_csv_line(line);
    if (cols.size() != 3) throw IoError("dataset: malformed row: " + line);
    ds.paths.push_back((base / cols[0]).string());
    ds.labels.push_back(std::stoi(cols[1]));
    ds.groups.push_back(cols[2]);
    ds.images.push_back(read_ppm(ds.paths.back()));
  }
  return ds;
}

ImageDataset load_from_manifest(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("manifest: cannot open " + csv_path);
  const fs::path base = fs::path(csv_path).parent_path();
  ImageDataset ds;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != "path,group,frame_idx,hash_hex,kept")
        throw IoError("manifest: unexpected header: " + line);
      header_seen = true;
      continue;
    }
    auto cols = split_csv_line(line);
    if (cols.size() != 5) throw IoError("manifest: malformed row: " + line);
    if (cols[4] != "1") continue;
    fs::path p(cols[0]);
    if (p.is_relative()) p = base / p;
    ds.paths.push_back(p.string());
    ds.labels.push_back(0);
    ds.groups.push_back(cols[1]);
    ds.images.push_back(read_ppm(ds.paths.back()));
  }
  if (!header_seen) throw IoError("manifest: missing header in " + csv_path);
  return ds;
}

ImageDataset load_dataset(const std::string& path) {
  if (fs::is_directory(path)) return load_labeled_dir(path);
  // peek at the header
  std::ifstream in(path);
  if (!in) throw IoError("dataset: cannot open " + path);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') break;
  in.close();
  if (line == "path,group,frame_idx,hash_hex,kept") return load_from_manifest(path);
  throw IoError("dataset: " + path + " is neither a labeled dir nor a manifest");
}

Tensor images_to_tensor(const std::vector<Image>& images,
                        const std::vector<size_t>& indices) {
  if (indices.empty()) throw ConfigError("images_to_tensor: empty batch");
  const size_t h = images[indices[0]].h, w = images[indices[0]].w;
  std::vector<double> data;
  data.reserve(indices.size() * h * w * 3);
  for (size_t idx : indices) {
    const Image& img = images[idx];
    if (img.h != h || img.w != w)
      throw ShapeError("images_to_tensor: mixed image sizes in batch");
    data.insert(data.end(), img.rgb.begin(), img.rgb.end());
  }
  return Tensor::from_data({indices.size(), h, w, 3}, std::move(data));
}

uint64_t file_fnv1a(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("hash: cannot open " + path);
  uint64_t h = 0xCBF29CE484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001B3ULL;
    }
    if (n < static_cast<std::streamsize>(sizeof buf)) break;
  }
  return h;
}

}  // namespace c2e
