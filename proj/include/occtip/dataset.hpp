#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "occtip/meshgen.hpp"
#include "occtip/store.hpp"

namespace occtip::dataset {

/// Synthetic stand-ins for frozen CLIP features. Class anchors are
/// orthonormal; an object's signature is its anchor plus `object_spread`
/// of seeded noise; captions and per-view image features add a little more.
struct FixtureConfig {
  int clip_dim = 64;
  int captions = 2;
  double object_spread = 0.6;
  double text_noise = 0.05;
  double image_noise = 0.05;

  void validate() const;
  store::json to_json() const;
  static FixtureConfig from_json(const store::json& j);
};

struct GenConfig {
  int resolution = 128;
  int points = 2048;
  std::uint64_t seed = 7;
  FixtureConfig fixtures;
  /// Surface samples per view for the visible-fraction report.
  int visibility_samples = 4000;
  /// 0 means one per hardware thread.
  int threads = 0;

  void validate() const;
  store::json to_json() const;
};

struct ObjectInfo {
  std::string name;
  std::string label;
  int class_id = 0;
  Mat text;  // captions × D
};

struct Dataset {
  std::vector<std::string> class_names;
  Mat class_text;  // K × D, one prompt feature per class
  std::vector<ObjectInfo> objects;
  /// Object-major, view-minor.
  std::vector<meshgen::TripletRecord> records;
  store::json metadata = store::json::object();

  int clip_dim() const { return static_cast<int>(class_text.cols()); }
  int num_classes() const { return static_cast<int>(class_names.size()); }
  int label_of(const meshgen::TripletRecord& r) const { return objects[static_cast<std::size_t>(r.object_id)].class_id; }
};

struct GenReport {
  int objects = 0;
  int views = 0;
  int records = 0;
  std::size_t points = 0;
  double mean_visible_fraction = 0;
  std::vector<std::string> warnings;

  store::json to_json() const;
};

/// File stem up to the last '_' ("cone_1" → "cone"); the whole stem when
/// there is none.
std::string label_from_name(const std::string& stem);

/// Every *.obj in `dir`, sorted by file name. Unreadable meshes are skipped
/// with a warning.
std::vector<meshgen::NamedMesh> load_mesh_dir(const std::string& dir, std::vector<std::string>* warnings);

/// K×D orthonormal rows from the QR factorization of a seeded Gaussian.
Mat class_anchors(int num_classes, int clip_dim, std::uint64_t seed);

/// Per mesh: normalize, render the 12 views, back-project, sample, and
/// attach fixture features. Meshes run in parallel; output does not depend
/// on the thread count.
Dataset generate(const std::vector<meshgen::NamedMesh>& meshes, const GenConfig& config,
                 GenReport* report = nullptr);

store::Container to_container(const Dataset& dataset);
Dataset from_container(const store::Container& container);

/// Held-out views per object, chosen by seed; the remaining views train.
struct Split {
  std::vector<std::vector<int>> train_views;
  std::vector<std::vector<int>> held_views;
};

Split split_views(const Dataset& dataset, int held_out, std::uint64_t seed);

/// Index of the record for (object, view); throws InvalidInput if absent.
std::size_t record_index(const Dataset& dataset, int object_id, int view_id);

}  // namespace occtip::dataset
