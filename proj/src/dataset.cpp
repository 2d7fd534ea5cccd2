#include "occtip/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <map>
#include <numeric>
#include <thread>

#include <Eigen/QR>

#include "occtip/error.hpp"

namespace occtip::dataset {

namespace fs = std::filesystem;
using store::json;

void FixtureConfig::validate() const {
  if (clip_dim < 1) fail(ErrorKind::InvalidConfig, "clip_dim must be positive");
  if (captions < 1) fail(ErrorKind::InvalidConfig, "captions must be at least 1");
  if (object_spread < 0 || text_noise < 0 || image_noise < 0) {
    fail(ErrorKind::InvalidConfig, "fixture noise levels must be non-negative");
  }
}

json FixtureConfig::to_json() const {
  return {{"clip_dim", clip_dim},
          {"captions", captions},
          {"object_spread", object_spread},
          {"text_noise", text_noise},
          {"image_noise", image_noise}};
}

FixtureConfig FixtureConfig::from_json(const json& j) {
  FixtureConfig c;
  c.clip_dim = j.value("clip_dim", c.clip_dim);
  c.captions = j.value("captions", c.captions);
  c.object_spread = j.value("object_spread", c.object_spread);
  c.text_noise = j.value("text_noise", c.text_noise);
  c.image_noise = j.value("image_noise", c.image_noise);
  return c;
}

void GenConfig::validate() const {
  if (resolution < 1) fail(ErrorKind::InvalidConfig, "resolution must be positive");
  if (points < 1) fail(ErrorKind::InvalidConfig, "points must be positive");
  if (visibility_samples < 1) fail(ErrorKind::InvalidConfig, "visibility_samples must be positive");
  if (threads < 0) fail(ErrorKind::InvalidConfig, "threads must be non-negative");
  fixtures.validate();
}

json GenConfig::to_json() const {
  return {{"resolution", resolution},
          {"points", points},
          {"seed", seed},
          {"fixtures", fixtures.to_json()},
          {"visibility_samples", visibility_samples}};
}

json GenReport::to_json() const {
  return {{"objects", objects},
          {"views", views},
          {"records", records},
          {"points", points},
          {"mean_visible_fraction", mean_visible_fraction},
          {"warnings", warnings}};
}

std::string label_from_name(const std::string& stem) {
  const auto pos = stem.rfind('_');
  return pos == std::string::npos || pos == 0 ? stem : stem.substr(0, pos);
}

std::vector<meshgen::NamedMesh> load_mesh_dir(const std::string& dir, std::vector<std::string>* warnings) {
  if (!fs::is_directory(dir)) fail(ErrorKind::InvalidInput, "mesh directory '" + dir + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".obj") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<meshgen::NamedMesh> out;
  for (const auto& path : files) {
    try {
      const std::string stem = path.stem().string();
      out.push_back({stem, label_from_name(stem), meshgen::read_obj(path.string())});
    } catch (const Error& e) {
      if (warnings) warnings->push_back(path.filename().string() + ": " + e.what());
    }
  }
  return out;
}

Mat class_anchors(int num_classes, int clip_dim, std::uint64_t seed) {
  if (num_classes > clip_dim) {
    fail(ErrorKind::InvalidConfig, "clip_dim " + std::to_string(clip_dim) + " cannot hold " +
                                       std::to_string(num_classes) + " orthonormal class anchors");
  }
  Rng rng(mix_seed(seed, 0xa11c4e));
  Eigen::MatrixXd g(clip_dim, num_classes);
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(clip_dim, num_classes);
  return q.transpose();
}

namespace {

/// Rounds through float so that in-memory data equals what the f32
/// container stores.
double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

RowVec noisy_unit(const RowVec& base, double scale, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(base.size())));
  RowVec v = base;
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += scale * normal(rng);
  v.normalize();
  return v.unaryExpr([](double x) { return f32(x); });
}

struct ObjectViews {
  std::vector<meshgen::PartialPointCloud> clouds;
  std::vector<double> visible;
  std::string error;
};

ObjectViews render_object(const meshgen::TriangleMesh& raw, const GenConfig& config, int object_index) {
  ObjectViews out;
  try {
    const auto mesh = meshgen::normalize_mesh(raw);
    const auto poses = meshgen::camera_ring(config.resolution, config.resolution);
    for (const auto& pose : poses) {
      const auto render = meshgen::rasterize(mesh, pose);
      const auto cloud = meshgen::backproject(render.depth, render.color, pose);
      auto sampled = meshgen::sample_points(
          cloud, static_cast<std::size_t>(config.points),
          mix_seed(config.seed, static_cast<std::uint64_t>(object_index), static_cast<std::uint64_t>(pose.view_id)));
      for (auto& p : sampled.points) p = p.unaryExpr([](double x) { return f32(x); });
      for (auto& c : sampled.colors) {
        for (auto& ch : c) ch = f32(ch);
      }
      out.clouds.push_back(std::move(sampled));
      out.visible.push_back(meshgen::visible_fraction(
          mesh, pose, render.depth, static_cast<std::size_t>(config.visibility_samples),
          mix_seed(config.seed ^ 0x5eed, static_cast<std::uint64_t>(object_index), static_cast<std::uint64_t>(pose.view_id))));
    }
  } catch (const Error& e) {
    out.clouds.clear();
    out.error = e.what();
  }
  return out;
}

}  // namespace

Dataset generate(const std::vector<meshgen::NamedMesh>& meshes, const GenConfig& config, GenReport* report) {
  config.validate();
  const int n = static_cast<int>(meshes.size());
  std::vector<ObjectViews> views(static_cast<std::size_t>(n));

  int threads = config.threads > 0 ? config.threads : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, std::max(1, n));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) views[static_cast<std::size_t>(i)] = render_object(meshes[static_cast<std::size_t>(i)].mesh, config, i);
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  GenReport local;
  std::vector<int> kept;
  for (int i = 0; i < n; ++i) {
    const auto& v = views[static_cast<std::size_t>(i)];
    if (v.clouds.empty()) {
      local.warnings.push_back(meshes[static_cast<std::size_t>(i)].name + ": " + v.error);
    } else {
      kept.push_back(i);
    }
  }
  if (kept.empty()) fail(ErrorKind::InvalidInput, "no mesh could be processed");

  Dataset ds;
  std::map<std::string, int> class_ids;
  for (int i : kept) class_ids.emplace(meshes[static_cast<std::size_t>(i)].label, 0);
  for (auto& [label, id] : class_ids) {
    id = static_cast<int>(ds.class_names.size());
    ds.class_names.push_back(label);
  }
  const auto& fx = config.fixtures;
  ds.class_text = class_anchors(ds.num_classes(), fx.clip_dim, config.seed).unaryExpr([](double x) { return f32(x); });

  double visible_sum = 0.0;
  std::size_t visible_count = 0;
  for (std::size_t o = 0; o < kept.size(); ++o) {
    const auto& mesh = meshes[static_cast<std::size_t>(kept[o])];
    ObjectInfo info;
    info.name = mesh.name;
    info.label = mesh.label;
    info.class_id = class_ids.at(mesh.label);
    Rng rng(mix_seed(config.seed, 0x0b1ec7, o));
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(fx.clip_dim)));
    RowVec signature = ds.class_text.row(info.class_id);
    for (Eigen::Index d = 0; d < signature.size(); ++d) signature(d) += fx.object_spread * normal(rng);
    signature.normalize();
    info.text.resize(fx.captions, fx.clip_dim);
    for (int c = 0; c < fx.captions; ++c) info.text.row(c) = noisy_unit(signature, fx.text_noise, rng);

    auto& obj_views = views[static_cast<std::size_t>(kept[o])];
    for (std::size_t v = 0; v < obj_views.clouds.size(); ++v) {
      meshgen::TripletRecord rec;
      rec.object_id = static_cast<int>(o);
      rec.view_id = obj_views.clouds[v].view_id;
      rec.point_cloud = std::move(obj_views.clouds[v]);
      rec.image_feature = noisy_unit(signature, fx.image_noise, rng).transpose();
      rec.text_features = info.text;
      local.points += rec.point_cloud.size();
      ds.records.push_back(std::move(rec));
      visible_sum += obj_views.visible[v];
      ++visible_count;
    }
    ds.objects.push_back(std::move(info));
  }

  local.objects = static_cast<int>(ds.objects.size());
  local.views = ds.objects.empty() ? 0 : static_cast<int>(ds.records.size() / ds.objects.size());
  local.records = static_cast<int>(ds.records.size());
  local.mean_visible_fraction = visible_count ? visible_sum / static_cast<double>(visible_count) : 0.0;
  ds.metadata = {{"kind", "dataset"}, {"gen", config.to_json()}, {"report", local.to_json()}};
  if (report) *report = std::move(local);
  return ds;
}

store::Container to_container(const Dataset& ds) {
  store::Container c;
  c.metadata = ds.metadata;
  c.metadata["kind"] = "dataset";
  c.metadata["class_names"] = ds.class_names;
  json objects = json::array();
  for (const auto& o : ds.objects) objects.push_back({{"name", o.name}, {"label", o.label}, {"class_id", o.class_id}});
  c.metadata["objects"] = objects;
  c.add(store::from_mat("class_text", ds.class_text, store::DType::F32));
  for (std::size_t i = 0; i < ds.objects.size(); ++i) {
    c.add(store::from_mat("object/" + std::to_string(i) + "/text", ds.objects[i].text, store::DType::F32));
  }
  std::vector<std::uint32_t> ids;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& r = ds.records[i];
    ids.push_back(static_cast<std::uint32_t>(r.object_id));
    ids.push_back(static_cast<std::uint32_t>(r.view_id));
    const std::string prefix = "record/" + std::to_string(i) + "/";
    Mat pts(static_cast<Eigen::Index>(r.point_cloud.size()), 3);
    for (std::size_t p = 0; p < r.point_cloud.size(); ++p) pts.row(static_cast<Eigen::Index>(p)) = r.point_cloud.points[p].transpose();
    c.add(store::from_mat(prefix + "points", pts, store::DType::F32));
    if (r.point_cloud.has_colors()) {
      Mat cols(static_cast<Eigen::Index>(r.point_cloud.size()), 3);
      for (std::size_t p = 0; p < r.point_cloud.size(); ++p) {
        for (int ch = 0; ch < 3; ++ch) cols(static_cast<Eigen::Index>(p), ch) = r.point_cloud.colors[p][static_cast<std::size_t>(ch)];
      }
      c.add(store::from_mat(prefix + "colors", cols, store::DType::F32));
    }
    c.add(store::from_vec(prefix + "image", r.image_feature, store::DType::F32));
  }
  c.add(store::from_u32("record_ids", ids, {ds.records.size(), 2}));
  return c;
}

Dataset from_container(const store::Container& c) {
  if (c.metadata.value("kind", "") != "dataset") fail(ErrorKind::FormatError, "container is not a dataset");
  Dataset ds;
  ds.metadata = c.metadata;
  try {
    ds.class_names = c.metadata.at("class_names").get<std::vector<std::string>>();
    for (const auto& o : c.metadata.at("objects")) {
      ObjectInfo info;
      info.name = o.at("name").get<std::string>();
      info.label = o.at("label").get<std::string>();
      info.class_id = o.at("class_id").get<int>();
      ds.objects.push_back(std::move(info));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::FormatError, std::string("dataset metadata: ") + e.what());
  }
  ds.class_text = store::to_mat(c.at("class_text"));
  for (std::size_t i = 0; i < ds.objects.size(); ++i) {
    ds.objects[i].text = store::to_mat(c.at("object/" + std::to_string(i) + "/text"));
  }
  const auto ids = store::to_u32(c.at("record_ids"));
  for (std::size_t i = 0; i < ids.size() / 2; ++i) {
    meshgen::TripletRecord r;
    r.object_id = static_cast<int>(ids[2 * i]);
    r.view_id = static_cast<int>(ids[2 * i + 1]);
    if (r.object_id >= static_cast<int>(ds.objects.size())) fail(ErrorKind::FormatError, "record references a missing object");
    const std::string prefix = "record/" + std::to_string(i) + "/";
    const Mat pts = store::to_mat(c.at(prefix + "points"));
    r.point_cloud.view_id = r.view_id;
    for (Eigen::Index p = 0; p < pts.rows(); ++p) r.point_cloud.points.push_back(pts.row(p).transpose());
    if (const auto* colors = c.find(prefix + "colors")) {
      const Mat cols = store::to_mat(*colors);
      for (Eigen::Index p = 0; p < cols.rows(); ++p) r.point_cloud.colors.push_back({cols(p, 0), cols(p, 1), cols(p, 2)});
    }
    r.image_feature = store::to_vec(c.at(prefix + "image"));
    r.text_features = ds.objects[static_cast<std::size_t>(r.object_id)].text;
    ds.records.push_back(std::move(r));
  }
  return ds;
}

Split split_views(const Dataset& ds, int held_out, std::uint64_t seed) {
  Split split;
  split.train_views.resize(ds.objects.size());
  split.held_views.resize(ds.objects.size());
  std::vector<std::vector<int>> views(ds.objects.size());
  for (const auto& r : ds.records) views[static_cast<std::size_t>(r.object_id)].push_back(r.view_id);
  for (std::size_t o = 0; o < views.size(); ++o) {
    auto v = views[o];
    std::sort(v.begin(), v.end());
    if (held_out < 0 || held_out >= static_cast<int>(v.size())) {
      fail(ErrorKind::InvalidConfig, "held_out_views must leave at least one training view");
    }
    Rng rng(mix_seed(seed, 0x4e1d, o));
    std::shuffle(v.begin(), v.end(), rng);
    split.held_views[o].assign(v.begin(), v.begin() + held_out);
    split.train_views[o].assign(v.begin() + held_out, v.end());
    std::sort(split.held_views[o].begin(), split.held_views[o].end());
    std::sort(split.train_views[o].begin(), split.train_views[o].end());
  }
  return split;
}

std::size_t record_index(const Dataset& ds, int object_id, int view_id) {
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    if (ds.records[i].object_id == object_id && ds.records[i].view_id == view_id) return i;
  }
  fail(ErrorKind::InvalidInput, "no record for object " + std::to_string(object_id) + " view " + std::to_string(view_id));
}

}  // namespace occtip::dataset
