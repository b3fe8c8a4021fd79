// volrig command-line driver.

#include "volrig/evaluation.hpp"
#include "volrig/extract.hpp"
#include "volrig/parallel.hpp"
#include "volrig/synth.hpp"
#include "volrig/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace volrig;

namespace {

constexpr const char* kVersion = "0.1.0";

struct MissingFile : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_exists(const fs::path& p) {
  if (!fs::exists(p)) throw MissingFile("no such file or directory: " + p.string());
}

std::string file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream s;
  s << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

struct Manifest {
  json doc;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  Manifest(const std::string& command, int argc, char** argv) {
    doc["command"] = command;
    doc["argv"] = std::vector<std::string>(argv, argv + argc);
    doc["started"] = utc_now();
    doc["versions"] = {{"volrig", kVersion}, {"compiler", __VERSION__}};
    doc["inputs"] = json::array();
    doc["outputs"] = json::array();
  }
  void input(const fs::path& p) { doc["inputs"].push_back({{"path", p.string()}, {"hash", file_hash(p)}}); }
  void output(const fs::path& p) { doc["outputs"].push_back(p.string()); }

  void write(const fs::path& path) {
    doc["finished"] = utc_now();
    doc["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp);
      out << doc.dump(2) << '\n';
      if (!out) throw std::runtime_error("failed writing manifest " + tmp.string());
    }
    fs::rename(tmp, path);
  }
};

struct Globals {
  int threads = 1;
  std::uint64_t seed = 1;
  int resolution = 0;  // 0: command default
};

Volume mask_volume(const OccupancyMask& m) {
  Volume v(m.grid);
  for (std::size_t i = 0; i < m.data.size(); ++i) v[i] = m.data[i] ? 1.0f : 0.0f;
  return v;
}

std::vector<fs::path> rig_files(const fs::path& dir) {
  require_exists(dir);
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".rig") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// featurize ------------------------------------------------------------------

struct FeaturizeArgs {
  fs::path mesh, out;
  std::size_t samples = 16000;
};

int run_featurize(const FeaturizeArgs& a, const Globals& g, Manifest& m) {
  require_exists(a.mesh);
  m.input(a.mesh);
  FeatureOptions opts;
  opts.resolution = g.resolution > 0 ? g.resolution : opts.resolution;
  opts.samples = a.samples;
  opts.seed = g.seed;
  const auto normalized = normalize_mesh(load_mesh(a.mesh));
  const auto f = featurize(normalized.mesh, opts);
  std::vector<Volume> vols;
  for (int c = 0; c < ShapeChannels::kCount; ++c) vols.push_back(f.channels.channel(c));
  vols.push_back(mask_volume(f.mask));
  std::vector<DumpChannel> chans;
  for (int c = 0; c < ShapeChannels::kCount; ++c) chans.push_back({ShapeChannels::kNames[c], &vols[c]});
  chans.push_back({"mask", &vols.back()});
  write_volume_dump(a.out, chans);
  for (const auto& ch : chans) m.output(a.out / (ch.name + ".raw"));
  m.output(a.out / "header.json");
  m.doc["config"] = {{"resolution", opts.resolution}, {"samples", opts.samples}, {"seed", opts.seed}};
  std::cout << std::left << std::setw(6) << "chan" << std::right << std::setw(14) << "min" << std::setw(14) << "max"
            << std::setw(14) << "mean" << '\n';
  for (const auto& s : channel_stats(f))
    std::cout << std::left << std::setw(6) << s.name << std::right << std::setw(14) << s.min << std::setw(14) << s.max
              << std::setw(14) << s.mean << '\n';
  m.write(a.out / "manifest.json");
  return 0;
}

// synth ------------------------------------------------------------------------

struct SynthArgs {
  std::string kind = "biped", name;
  fs::path out = ".";
  double step = 0.02;
};

int run_synth(const SynthArgs& a, const Globals& g, Manifest& m) {
  const auto kind = parse_synth_kind(a.kind);
  const auto character = make_synthetic_character(kind, g.seed, a.step);
  const std::string name = a.name.empty() ? a.kind + "_" + std::to_string(g.seed) : a.name;
  const auto rig = save_rig(character, a.out, name);
  m.doc["config"] = {{"kind", a.kind}, {"seed", g.seed}, {"step", a.step}};
  m.output(a.out / (name + ".obj"));
  m.output(rig);
  std::cout << rig.string() << ": " << character.skeleton.joints.size() << " joints, " << character.mesh.triangles.size()
            << " triangles\n";
  m.write(a.out / (name + ".manifest.json"));
  return 0;
}

// train ------------------------------------------------------------------------

struct TrainArgs {
  fs::path data, config, out = "run";
  int iterations = 300, modules = 4, batch = 1, augment = 0;
  double lr = 1e-4, dropout = 0.2;
  std::size_t samples = 16000;
};

int run_train(const TrainArgs& a, const Globals& g, Manifest& m, const CLI::App& sub, bool seed_given) {
  TrainConfig cfg;
  if (!a.config.empty()) {
    require_exists(a.config);
    m.input(a.config);
    std::ifstream in(a.config);
    cfg = TrainConfig::from_json(json::parse(in), cfg);
  }
  if (sub.count("--iterations")) cfg.iterations = a.iterations;
  if (sub.count("--modules")) cfg.num_modules = a.modules;
  if (sub.count("--batch")) cfg.batch_size = a.batch;
  if (sub.count("--augment")) cfg.augmentations = a.augment;
  if (sub.count("--lr")) cfg.lr = a.lr;
  if (sub.count("--dropout")) cfg.dropout = a.dropout;
  if (sub.count("--samples")) cfg.samples = a.samples;
  if (g.resolution > 0) cfg.resolution = g.resolution;
  if (seed_given) cfg.seed = g.seed;
  if (const char* cache = std::getenv("VOLRIG_CACHE"); cache && *cache) cfg.cache_dir = cache;
  cfg.checkpoint = a.out / "checkpoint";
  cfg.loss_log = a.out / "loss.jsonl";
  cfg.validate();

  std::vector<RiggedCharacter> dataset;
  std::vector<std::string> names, errors;
  for (const auto& path : rig_files(a.data)) {
    try {
      dataset.push_back(load_rig(path));
      names.push_back(path.stem().string());
      m.input(path);
    } catch (const std::exception& e) {
      errors.push_back(e.what());
    }
  }
  if (!errors.empty()) {
    std::cerr << "invalid rig files:\n";
    for (const auto& e : errors) std::cerr << "  " << e << '\n';
    return 1;
  }
  if (dataset.empty()) throw std::runtime_error("no .rig files in " + a.data.string());

  m.doc["config"] = cfg.to_json();
  m.doc["config"]["cache_dir"] = cfg.cache_dir.string();
  m.doc["seed"] = cfg.seed;
  const auto result = train(dataset, cfg, names, [&](const IterationRecord& r) {
    if (r.iteration % 10 == 0 || r.iteration + 1 == cfg.iterations)
      std::cout << "iter " << r.iteration << "  loss " << r.loss << "  (" << r.example << ")\n" << std::flush;
  });
  if (!result.history.empty())
    m.doc["loss"] = {{"initial", result.history.front().loss}, {"final", result.history.back().loss}};
  m.output(cfg.checkpoint.string() + ".json");
  m.output(cfg.checkpoint.string() + ".bin");
  m.output(cfg.loss_log);
  m.write(a.out / "manifest.json");
  return 0;
}

// predict ----------------------------------------------------------------------

struct PredictArgs {
  fs::path mesh, checkpoint, out, json_out, dump;
  double granularity = GranularityParam::kDefault;
  double sigma = 4.5, threshold = 0.013;
  std::string decay = "subtractive";
  bool no_symmetry = false;
};

int run_predict(const PredictArgs& a, const Globals& g, Manifest& m) {
  require_exists(a.mesh);
  require_exists(fs::path(a.checkpoint.string() + ".json"));
  m.input(a.mesh);
  m.input(a.checkpoint.string() + ".json");
  m.input(a.checkpoint.string() + ".bin");
  const Predictor predictor(a.checkpoint, g.resolution);
  PredictOptions opts;
  opts.granularity = GranularityParam(a.granularity);
  opts.nms.sigma = a.sigma;
  opts.nms.threshold = a.threshold;
  opts.nms.decay = parse_nms_decay(a.decay);
  opts.symmetrize = !a.no_symmetry;
  m.doc["config"] = {{"granularity", opts.granularity.value}, {"sigma", opts.nms.sigma},
                     {"threshold", opts.nms.threshold},       {"decay", to_string(opts.nms.decay)},
                     {"symmetrize", opts.symmetrize},
                     {"resolution", predictor.network_config().resolution}};
  m.doc["seed"] = g.seed;
  Prediction p;
  try {
    p = predictor.predict(load_mesh(a.mesh), opts);
  } catch (const EmptySkeletonError& e) {
    std::cerr << "volrig predict: empty joint set: " << e.what() << '\n';
    return 3;
  }
  const fs::path out_dir = a.out.has_parent_path() ? a.out.parent_path() : fs::path(".");
  fs::create_directories(out_dir);
  const auto mesh_rel = fs::relative(fs::absolute(a.mesh), fs::absolute(out_dir));
  write_rig_file(a.out, p.skeleton, mesh_rel.generic_string());
  m.output(a.out);
  if (!a.json_out.empty()) {
    json j{{"root", p.skeleton.root}, {"joints", json::array()}};
    const auto parents = p.skeleton.parents();
    for (std::size_t i = 0; i < p.skeleton.joints.size(); ++i) {
      const auto& jt = p.skeleton.joints[i];
      j["joints"].push_back({{"name", jt.name},
                             {"position", {jt.position.x(), jt.position.y(), jt.position.z()}},
                             {"parent", parents[i]},
                             {"probability", p.candidates[i].probability}});
    }
    std::ofstream(a.json_out) << j.dump(2) << '\n';
    m.output(a.json_out);
  }
  if (!a.dump.empty()) {
    const Volume mask = mask_volume(p.features.mask);
    write_volume_dump(a.dump, {{"joint", &p.joint_map}, {"bone", &p.bone_map}, {"mask", &mask}});
    m.output(a.dump);
  }
  m.doc["joints"] = p.skeleton.joints.size();
  m.doc["symmetric"] = p.symmetry.has_value();
  std::cout << a.out.string() << ": " << p.skeleton.joints.size() << " joints"
            << (p.symmetry ? " (symmetrized)" : "") << '\n';
  m.write(a.out.string() + ".manifest.json");
  return 0;
}

// eval -------------------------------------------------------------------------

struct EvalArgs {
  fs::path pred, ref, mesh, json_out;
  double tol = 0.5;
  bool strict = false;
};

int run_eval(const EvalArgs& a, const Globals&, Manifest& m) {
  require_exists(a.ref);
  require_exists(a.mesh);
  std::vector<EvalCase> cases;
  for (const auto& p : rig_files(a.pred)) {
    EvalCase c;
    c.name = p.stem().string();
    const auto ref = a.ref / p.filename();
    const auto mesh = a.mesh / (c.name + ".obj");
    require_exists(ref);
    require_exists(mesh);
    m.input(p);
    m.input(ref);
    m.input(mesh);
    c.pred = read_rig_file(p).skeleton;
    c.ref = read_rig_file(ref).skeleton;
    c.mesh = load_mesh(mesh);
    cases.push_back(std::move(c));
  }
  if (cases.empty()) throw std::runtime_error("no predicted .rig files in " + a.pred.string());
  const auto report = evaluate_dataset(cases, a.tol);
  std::cout << report.table();
  const fs::path json_path = a.json_out.empty() ? a.pred / "eval.json" : a.json_out;
  std::ofstream(json_path) << report.to_json().dump(2) << '\n';
  m.output(json_path);
  m.doc["config"] = {{"tolerance", a.tol}, {"strict", a.strict}};
  m.doc["mean"] = report.to_json()["mean"];
  m.write(json_path.string() + ".manifest.json");
  return a.strict && report.any_flagged() ? 4 : 0;
}

// inspect ----------------------------------------------------------------------

struct InspectArgs {
  fs::path dump, out;
  std::string channel = "sdf";
  int axis = 2, slice = -1;
};

int run_inspect(const InspectArgs& a, const Globals&, Manifest& m) {
  require_exists(a.dump / "header.json");
  const auto d = read_volume_dump(a.dump);
  const auto it = std::find(d.names.begin(), d.names.end(), a.channel);
  if (it == d.names.end()) throw std::invalid_argument("dump has no channel '" + a.channel + "'");
  const auto& vol = d.volumes[static_cast<std::size_t>(it - d.names.begin())];
  const int slice = a.slice >= 0 ? a.slice : d.grid.resolution / 2;
  const fs::path out = a.out.empty() ? a.dump / (a.channel + "_" + std::to_string(a.axis) + "_" + std::to_string(slice) + ".pgm") : a.out;
  write_pgm_slice(vol, a.axis, slice, out);
  m.input(a.dump / "header.json");
  m.output(out);
  m.doc["config"] = {{"channel", a.channel}, {"axis", a.axis}, {"slice", slice}};
  std::cout << out.string() << '\n';
  m.write(out.string() + ".manifest.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"volrig: volumetric animation-skeleton prediction"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--threads", g.threads, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Seed for every stochastic step");
  app.add_option("--resolution", g.resolution, "Grid resolution (multiple of 8)")->check(CLI::PositiveNumber);

  FeaturizeArgs fa;
  auto* feat = app.add_subcommand("featurize", "Compute the 5 input channels and mask of a mesh");
  feat->add_option("mesh", fa.mesh, "OBJ file")->required();
  feat->add_option("--out", fa.out, "Output directory")->required();
  feat->add_option("--samples", fa.samples, "Surface samples");

  SynthArgs sa;
  auto* syn = app.add_subcommand("synth", "Generate a synthetic rigged character");
  syn->add_option("--kind", sa.kind, "biped | quadruped | star");
  syn->add_option("--out", sa.out, "Output directory");
  syn->add_option("--name", sa.name, "File stem (default <kind>_<seed>)");
  syn->add_option("--step", sa.step, "Meshing lattice step");

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train the network on a directory of rigs");
  trn->add_option("--data", ta.data, "Directory of .rig files")->required();
  trn->add_option("--config", ta.config, "JSON training config (flags override it)");
  trn->add_option("--out", ta.out, "Run directory");
  trn->add_option("--iterations", ta.iterations, "Optimizer steps");
  trn->add_option("--modules", ta.modules, "Stacked hourglass modules");
  trn->add_option("--batch", ta.batch, "Characters per step");
  trn->add_option("--augment", ta.augment, "Augmented variants per character (0-5)");
  trn->add_option("--lr", ta.lr, "Adam learning rate");
  trn->add_option("--dropout", ta.dropout, "Dropout probability");
  trn->add_option("--samples", ta.samples, "Surface samples per character");

  PredictArgs pa;
  auto* prd = app.add_subcommand("predict", "Predict a skeleton for a mesh");
  prd->add_option("mesh", pa.mesh, "OBJ file")->required();
  prd->add_option("--checkpoint", pa.checkpoint, "Checkpoint stem (without .json/.bin)")->required();
  prd->add_option("--out", pa.out, "Output .rig")->required();
  prd->add_option("--granularity", pa.granularity, "Granularity in [0, 1]")->check(CLI::Range(0.0, 1.0));
  prd->add_option("--json", pa.json_out, "Also write the skeleton as JSON");
  prd->add_option("--dump", pa.dump, "Write probability maps to this directory");
  prd->add_option("--sigma", pa.sigma, "Soft-NMS Gaussian std in voxels");
  prd->add_option("--threshold", pa.threshold, "Soft-NMS stopping threshold");
  prd->add_option("--nms-decay", pa.decay, "Soft-NMS suppression: subtractive or multiplicative")
      ->check(CLI::IsMember({"subtractive", "multiplicative"}));
  prd->add_flag("--no-symmetry", pa.no_symmetry, "Skip map symmetrization");

  EvalArgs ea;
  auto* evl = app.add_subcommand("eval", "Compare predicted and reference skeletons");
  evl->add_option("--pred", ea.pred, "Directory of predicted .rig files")->required();
  evl->add_option("--ref", ea.ref, "Directory of reference .rig files")->required();
  evl->add_option("--mesh", ea.mesh, "Directory of <name>.obj meshes")->required();
  evl->add_option("--tol", ea.tol, "Match radius as a fraction of local diameter");
  evl->add_option("--json", ea.json_out, "Report path (default <pred>/eval.json)");
  evl->add_flag("--strict", ea.strict, "Exit nonzero if any shape is flagged");

  InspectArgs ia;
  auto* ins = app.add_subcommand("inspect", "Write a PGM cross-section of a dumped channel");
  ins->add_option("dump", ia.dump, "Dump directory (featurize --out or predict --dump)")->required();
  ins->add_option("--channel", ia.channel, "Channel or map name");
  ins->add_option("--axis", ia.axis, "Slice normal axis")->check(CLI::Range(0, 2));
  ins->add_option("--slice", ia.slice, "Slice index (default middle)");
  ins->add_option("--out", ia.out, "Output .pgm");

  CLI11_PARSE(app, argc, argv);
  set_num_threads(g.threads);
  const std::string name = app.get_subcommands().front()->get_name();
  Manifest m(name, argc, argv);
  m.doc["threads"] = g.threads;
  m.doc["seed"] = g.seed;
  try {
    if (*feat) return run_featurize(fa, g, m);
    if (*syn) return run_synth(sa, g, m);
    if (*trn) return run_train(ta, g, m, *trn, app.count("--seed") > 0);
    if (*prd) return run_predict(pa, g, m);
    if (*evl) return run_eval(ea, g, m);
    if (*ins) return run_inspect(ia, g, m);
  } catch (const MissingFile& e) {
    std::cerr << "volrig " << name << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "volrig " << name << ": " << e.what() << '\n';
    return 1;
  }
  return 1;
}
