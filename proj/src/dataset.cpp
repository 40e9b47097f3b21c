#include "scg/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "scg/image_io.hpp"
#include "scg/synthetic.hpp"

namespace scg {

std::vector<std::filesystem::path> list_png_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

DatasetLayout DatasetLayout::open(const std::filesystem::path& root, bool require_sketches) {
  namespace fs = std::filesystem;
  DatasetLayout d;
  d.root_ = root;
  if (!fs::is_directory(root)) throw DatasetError("dataset root " + root.string() + " is not a directory");
  if (!fs::is_directory(root / "photos")) throw DatasetError("dataset " + root.string() + " has no photos/ directory");
  const bool has_sketch_dir = fs::is_directory(root / "sketches");
  if (require_sketches && !has_sketch_dir) {
    throw DatasetError("dataset " + root.string() + " has no sketches/ directory");
  }

  std::map<std::string, DatasetEntry> by_stem;
  for (const auto& p : list_png_files(root / "photos")) {
    DatasetEntry e;
    e.stem = p.stem().string();
    e.photo = p;
    by_stem.emplace(e.stem, std::move(e));
  }
  std::vector<std::string> problems;
  if (has_sketch_dir) {
    for (const auto& p : list_png_files(root / "sketches")) {
      auto it = by_stem.find(p.stem().string());
      if (it == by_stem.end()) {
        problems.push_back("sketch " + p.filename().string() + " has no photo with the same stem");
      } else {
        it->second.sketch = p;
      }
    }
  }

  const fs::path manifest = root / "manifest.tsv";
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty() || line[0] == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        problems.push_back("manifest line " + std::to_string(n) + " lacks a tab");
        continue;
      }
      const std::string stem = line.substr(0, tab), split = line.substr(tab + 1);
      auto it = by_stem.find(stem);
      if (it == by_stem.end()) {
        problems.push_back("manifest line " + std::to_string(n) + " names unknown image " + stem);
      } else {
        it->second.split = split;
      }
    }
  }

  for (auto& [stem, e] : by_stem) {
    for (const auto* path : {&e.photo, e.sketch ? &*e.sketch : nullptr}) {
      if (!path) continue;
      Raster r;
      try {
        r = read_png_raster(*path);
      } catch (const IoError& err) {
        problems.push_back(err.what());
        continue;
      }
      if (d.height_ == 0) {
        d.height_ = r.height;
        d.width_ = r.width;
      } else if (r.height != d.height_ || r.width != d.width_) {
        problems.push_back(path->filename().string() + " is " + std::to_string(r.width) + "x" +
                           std::to_string(r.height) + ", expected " + std::to_string(d.width_) + "x" +
                           std::to_string(d.height_));
      }
    }
    d.entries_.push_back(std::move(e));
  }
  if (d.entries_.empty()) problems.push_back("no photos found in " + (root / "photos").string());
  if (!problems.empty()) {
    std::string msg = "invalid dataset " + root.string() + ":";
    for (const auto& p : problems) msg += "\n  " + p;
    throw DatasetError(msg);
  }
  return d;
}

namespace {

Tensor as_rgb(Tensor t) {
  if (t.dim(0) == 3) return t;
  return concat({t, t, t}, 0).detach();
}

Tensor as_gray(const Tensor& t) { return t.dim(0) == 1 ? t : to_grayscale(t); }

bool in_split(const DatasetEntry& e, const std::string& split) { return split.empty() || e.split == split; }

}  // namespace

std::vector<ImagePair> DatasetLayout::load_pairs(const std::string& split) const {
  std::vector<ImagePair> out;
  for (const auto& e : entries_) {
    if (!e.sketch || !in_split(e, split)) continue;
    out.push_back({e.stem, as_rgb(read_png(e.photo)), as_gray(read_png(*e.sketch))});
  }
  return out;
}

std::vector<PhotoItem> DatasetLayout::load_unpaired_photos(const std::string& split) const {
  std::vector<PhotoItem> out;
  for (const auto& e : entries_)
    if (!e.sketch && in_split(e, split)) out.push_back({e.stem, as_rgb(read_png(e.photo))});
  return out;
}

std::vector<PhotoItem> DatasetLayout::load_photos(const std::string& split) const {
  std::vector<PhotoItem> out;
  for (const auto& e : entries_)
    if (in_split(e, split)) out.push_back({e.stem, as_rgb(read_png(e.photo))});
  return out;
}

}  // namespace scg
