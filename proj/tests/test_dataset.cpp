#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>

#include "occtip/dataset.hpp"
#include "occtip/error.hpp"

using namespace occtip;
using namespace occtip::dataset;
namespace fs = std::filesystem;

namespace {

std::vector<meshgen::NamedMesh> four_meshes() {
  auto all = meshgen::toy_shapes(1);
  return {all[0], all[1], all[2], all[3]};
}

GenConfig small_config(int threads) {
  GenConfig c;
  c.resolution = 48;
  c.points = 256;
  c.fixtures.clip_dim = 16;
  c.visibility_samples = 500;
  c.threads = threads;
  return c;
}

}  // namespace

TEST_CASE("four meshes give 48 records") {
  GenReport report;
  const auto ds = generate(four_meshes(), small_config(1), &report);
  CHECK(ds.records.size() == 48);
  CHECK(report.records == 48);
  CHECK(report.objects == 4);
  CHECK(ds.num_classes() == 4);
  CHECK(ds.clip_dim() == 16);
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& r = ds.records[i];
    CHECK(r.object_id == static_cast<int>(i / 12));
    CHECK(r.view_id == static_cast<int>(i % 12));
    CHECK(r.point_cloud.size() == 256);
    CHECK(r.image_feature.size() == 16);
    CHECK(r.text_features.rows() == 2);
    CHECK(record_index(ds, r.object_id, r.view_id) == i);
  }
  CHECK_THROWS_AS(record_index(ds, 4, 0), Error);
  CHECK(report.mean_visible_fraction > 0.05);
  CHECK(report.mean_visible_fraction < 0.6);
}

TEST_CASE("generation is deterministic and thread independent") {
  const auto a = store::write_container(to_container(generate(four_meshes(), small_config(1))));
  const auto b = store::write_container(to_container(generate(four_meshes(), small_config(3))));
  CHECK(a == b);
  auto other = small_config(1);
  other.seed = 8;
  CHECK(store::write_container(to_container(generate(four_meshes(), other))) != a);
}

TEST_CASE("container round trip") {
  const auto ds = generate(four_meshes(), small_config(0));
  const auto bytes = store::write_container(to_container(ds));
  const auto back = from_container(store::read_container(bytes));
  CHECK(store::write_container(to_container(back)) == bytes);
  CHECK(back.class_names == ds.class_names);
  CHECK(back.records[17].point_cloud.points == ds.records[17].point_cloud.points);
}

TEST_CASE("labels and anchors") {
  CHECK(label_from_name("cone_1") == "cone");
  CHECK(label_from_name("big_box_12") == "big_box");
  CHECK(label_from_name("sphere") == "sphere");
  CHECK(label_from_name("_x") == "_x");

  const Mat q = class_anchors(8, 16, 5);
  CHECK((q * q.transpose() - Mat::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(class_anchors(8, 16, 5) == q);
  CHECK_THROWS_AS(class_anchors(17, 16, 5), Error);
}

TEST_CASE("view split") {
  const auto ds = generate(four_meshes(), small_config(0));
  const auto split = split_views(ds, 2, 11);
  for (std::size_t o = 0; o < 4; ++o) {
    CHECK(split.held_views[o].size() == 2);
    CHECK(split.train_views[o].size() == 10);
    std::set<int> all(split.train_views[o].begin(), split.train_views[o].end());
    for (int v : split.held_views[o]) CHECK(all.insert(v).second);
    CHECK(all.size() == 12);
  }
  CHECK(split_views(ds, 2, 11).held_views == split.held_views);
  CHECK_THROWS_AS(split_views(ds, 12, 11), Error);
}

TEST_CASE("mesh directory loading skips bad files") {
  const fs::path dir = "test_dataset_meshes";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream(dir / "box_1.obj") << meshgen::to_obj(meshgen::make_box(1, 1, 1));
    std::ofstream(dir / "cone_2.obj") << meshgen::to_obj(meshgen::make_cone(0.5, 1, 12));
    std::ofstream(dir / "broken_1.obj") << "v 0 0 0\nf 1 2 3\n";
    std::ofstream(dir / "notes.txt") << "ignored";
  }
  std::vector<std::string> warnings;
  const auto meshes = load_mesh_dir(dir.string(), &warnings);
  REQUIRE(meshes.size() == 2);
  CHECK(meshes[0].name == "box_1");
  CHECK(meshes[0].label == "box");
  CHECK(meshes[1].label == "cone");
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("broken_1.obj") != std::string::npos);
  fs::remove_all(dir);
  CHECK_THROWS_AS(load_mesh_dir("no/such/dir", nullptr), Error);
}
