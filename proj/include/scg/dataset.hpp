#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scg/error.hpp"
#include "scg/reference_store.hpp"
#include "scg/trainer.hpp"

namespace scg {

// Problems with a dataset directory; the message lists every offending item.
class DatasetError : public Error {
 public:
  using Error::Error;
};

struct DatasetEntry {
  std::string stem;
  std::filesystem::path photo;
  std::optional<std::filesystem::path> sketch;
  std::string split = "train";
};

// <root>/photos/*.png and <root>/sketches/*.png paired by file stem, plus an
// optional <root>/manifest.tsv with "stem<TAB>split" lines. Entries missing
// from the manifest are in the train split.
class DatasetLayout {
 public:
  // Scans and validates the directory. With `require_sketches`, a missing
  // sketches/ directory is an error.
  static DatasetLayout open(const std::filesystem::path& root, bool require_sketches = true);

  const std::filesystem::path& root() const { return root_; }
  const std::vector<DatasetEntry>& entries() const { return entries_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }

  // Photo-sketch pairs in stem order; an empty split selects every entry.
  std::vector<ImagePair> load_pairs(const std::string& split = "train") const;
  // Photos of every entry in the split that has no sketch.
  std::vector<PhotoItem> load_unpaired_photos(const std::string& split = "train") const;
  // All photos of the split, paired or not.
  std::vector<PhotoItem> load_photos(const std::string& split = "train") const;

 private:
  std::filesystem::path root_;
  std::vector<DatasetEntry> entries_;
  std::size_t height_ = 0, width_ = 0;
};

std::vector<std::filesystem::path> list_png_files(const std::filesystem::path& dir);

}  // namespace scg
