// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#include "c2e/ingest.hpp"

#include <algorithm>
#include <bit>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "c2e/errors.hpp"

namespace fs = std::filesystem;

namespace c2e {

uint64_t average_hash(const Image& img) {
  // grayscale box-downsample to 8x8
  double cell[64] = {0};
  for (size_t y = 0; y < img.h; ++y)
    for (size_t x = 0; x < img.w; ++x) {
      const double g = (img.at(y, x, 0) + img.at(y, x, 1) + img.at(y, x, 2)) / 3.0;
      cell[(y * 8 / img.h) * 8 + (x * 8 / img.w)] += g;
    }
  const double per_cell = static_cast<double>(img.h * img.w) / 64.0;
  double mean = 0.0;
  for (double& c : cell) {
    c /= per_cell;
    mean += c;
  }
  mean /= 64.0;
  uint64_t bits = 0;
  for (int i = 0; i < 64; ++i)
    if (cell[i] > mean) bits |= 1ULL << i;
  return bits;
}

int hamming_distance(uint64_t a, uint64_t b) { return std::popcount(a ^ b); }

FrameManifest sample_frames(const std::string& dir, size_t every_k) {
  if (every_k == 0) throw ConfigError("ingest: every_k must be >= 1");
  if (!fs::is_directory(dir)) throw IngestError("ingest: not a directory: " + dir);

  std::map<std::string, std::vector<std::string>> groups;  // sorted by key
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory()) continue;
    std::vector<std::string> frames;
    for (const auto& f : fs::directory_iterator(entry.path()))
      if (f.is_regular_file() && f.path().extension() == ".ppm")
        frames.push_back(f.path().string());
    if (frames.empty()) continue;
    std::sort(frames.begin(), frames.end());
    groups[entry.path().filename().string()] = std::move(frames);
  }
  if (groups.empty())
    throw IngestError("ingest: no group subdirectories with .ppm frames under " + dir);

  FrameManifest m;
  m.every_k = every_k;
  for (const auto& [group, frames] : groups) {
    for (size_t i = 0; i < frames.size(); ++i) {
      FrameEntry e;
      e.path = frames[i];
      e.group = group;
      e.frame_idx = i;
      e.hash = average_hash(read_ppm(frames[i]));
      e.kept = (i % every_k) == 0;
      m.entries.push_back(std::move(e));
    }
  }
  return m;
}

FrameManifest dedup(const FrameManifest& manifest, int threshold) {
  if (threshold < 0) throw ConfigError("dedup: threshold must be >= 0");
  FrameManifest out = manifest;
  out.dedup_threshold = threshold;
  std::map<std::string, std::vector<uint64_t>> kept_hashes;
  for (auto& e : out.entries) {
    if (!e.kept) continue;
    auto& seen = kept_hashes[e.group];
    bool duplicate = false;
    for (uint64_t h : seen)
      if (hamming_distance(h, e.hash) <= threshold) {
        duplicate = true;
        break;
      }
    if (duplicate)
      e.kept = false;
    else
      seen.push_back(e.hash);
  }
  return out;
}

FrameManifest exclude(const FrameManifest& manifest,
                      const std::vector<std::string>& holdout) {
  FrameManifest out;
  out.every_k = manifest.every_k;
  out.dedup_threshold = manifest.dedup_threshold;
  out.excluded_groups = manifest.excluded_groups;
  for (const auto& g : holdout) {
    bool known = false;
    for (const auto& e : manifest.entries) known = known || e.group == g;
    if (!known) std::cerr << "ingest: warning: unknown group \"" << g << "\"\n";
    if (std::find(out.excluded_groups.begin(), out.excluded_groups.end(), g) ==
        out.excluded_groups.end())
      out.excluded_groups.push_back(g);
  }
  for (const auto& e : manifest.entries)
    if (std::find(holdout.begin(), holdout.end(), e.group) == holdout.end())
      out.entries.push_back(e);
  return out;
}

void save_manifest_csv(const FrameManifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("manifest: cannot write " + path);
  out << "# every_k=" << manifest.every_k << "\n";
  out << "# threshold=" << manifest.dedup_threshold << "\n";
  out << "# excluded=";
  for (size_t i = 0; i < manifest.excluded_groups.size(); ++i)
    out << (i ? ";" : "") << manifest.excluded_groups[i];
  out << "\n";
  out << "path,group,frame_idx,hash_hex,kept\n";
  char hex[17];
  for (const auto& e : manifest.entries) {
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(e.hash));
    out << e.path << "," << e.group << "," << e.frame_idx << "," << hex << ","
        << (e.kept ? 1 : 0) << "\n";
  }
}

FrameManifest load_manifest_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("manifest: cannot open " + path);
  FrameManifest m;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2);
      const std::string val = line.substr(eq + 1);
      if (key == "every_k") m.every_k = std::stoul(val);
      else if (key == "threshold") m.dedup_threshold = std::stoi(val);
      else if (key == "excluded" && !val.empty()) {
        std::stringstream ss(val);
        std::string g;
        while (std::getline(ss, g, ';')) m.excluded_groups.push_back(g);
      }
      continue;
    }
    if (!header_seen) {
      if (line != "path,group,frame_idx,hash_hex,kept")
        throw IoError("manifest: unexpected header: " + line);
      header_seen = true;
      continue;
    }
    std::stringstream ss(line);
    std::string path_col, group, idx, hash, kept;
    std::getline(ss, path_col, ',');
    std::getline(ss, group, ',');
    std::getline(ss, idx, ',');
    std::getline(ss, hash, ',');
    std::getline(ss, kept, ',');
    FrameEntry e;
    e.path = path_col;
    e.group = group;
    e.frame_idx = std::stoull(idx);
    e.hash = std::stoull(hash, nullptr, 16);
    e.kept = kept == "1";
    m.entries.push_back(std::move(e));
  }
  if (!header_seen) throw IoError("manifest: missing header in " + path);
  return m;
}

}  // namespace c2e
