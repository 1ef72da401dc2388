// Command-line front end: corpus synthesis, training, evaluation, complexity
// benchmarking, ablation sweeps and gate-map visualization.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "sshnet/config_json.hpp"
#include "sshnet/model.hpp"
#include "sshnet/synth.hpp"
#include "sshnet/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sshnet;

namespace {

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  return json::parse(f);
}

void echo_config(const std::string& dir, const json& resolved) {
  fs::create_directories(dir);
  std::ofstream f(fs::path(dir) / "config.json");
  f << resolved.dump(2) << "\n";
}

std::vector<WatermarkAsset> resolve_assets(const std::string& assets_dir,
                                           const std::string& out_dir) {
  if (assets_dir.empty()) {
    // Built-ins; materialize them next to the corpus for provenance.
    auto assets = synth::make_default_assets();
    fs::create_directories(fs::path(out_dir) / "assets");
    for (const auto& a : assets)
      save_asset(a, (fs::path(out_dir) / "assets" / (a.name + ".png")).string());
    return assets;
  }
  std::vector<fs::path> files;
  for (const auto& ent : fs::directory_iterator(assets_dir))
    if (ent.is_regular_file() && ent.path().extension() == ".png") files.push_back(ent.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no PNG assets in " + assets_dir);
  std::vector<WatermarkAsset> assets;
  for (const auto& f : files) {
    WatermarkAsset a = load_asset(f.string());
    a.name = f.stem().string();
    assets.push_back(std::move(a));
  }
  return assets;
}

uint64_t vm_peak_kb() {
  std::ifstream f("/proc/self/status");
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      uint64_t kb = 0;
      std::sscanf(line.c_str(), "VmHWM: %lu", &kb);
      return kb;
    }
  }
  return 0;
}

Image render_gray(const std::vector<float>& plane, int h, int w) {
  Image img(h, w);
  for (int64_t i = 0; i < static_cast<int64_t>(plane.size()); ++i) {
    float v = std::min(std::max(plane[i], 0.f), 1.f);
    img.px[i * 3 + 0] = v;
    img.px[i * 3 + 1] = v;
    img.px[i * 3 + 2] = v;
  }
  return img;
}

Image montage_row(const std::vector<Image>& panels, int gap = 4) {
  int h = panels[0].height;
  int w = 0;
  for (const auto& p : panels) w += p.width;
  w += gap * (static_cast<int>(panels.size()) - 1);
  Image out(h, w, 1.f);
  int x = 0;
  for (const auto& p : panels) {
    for (int r = 0; r < p.height; ++r)
      for (int c = 0; c < p.width; ++c)
        for (int ch = 0; ch < 3; ++ch) out.at(r, x + c, ch) = p.at(r, c, ch);
    x += p.width + gap;
  }
  return out;
}

Image stack_rows(const std::vector<Image>& rows, int gap = 4) {
  int w = 0, h = 0;
  for (const auto& r : rows) {
    w = std::max(w, r.width);
    h += r.height;
  }
  h += gap * (static_cast<int>(rows.size()) - 1);
  Image out(h, w, 1.f);
  int y = 0;
  for (const auto& r : rows) {
    for (int rr = 0; rr < r.height; ++rr)
      for (int c = 0; c < r.width; ++c)
        for (int ch = 0; ch < 3; ++ch) out.at(y + rr, c, ch) = r.at(rr, c, ch);
    y += r.height + gap;
  }
  return out;
}

struct BenchResult {
  int64_t params = 0, macs = 0, flops = 0;
  double latency_ms = 0;
  uint64_t peak_mem_kb = 0;
  double scaling_ratio = 0;
};

BenchResult run_bench(const ModelConfig& cfg, int h, int w, int runs, int warmups,
                      bool measure_latency) {
  SshNet<float> model(cfg, 0);
  BenchResult r;
  r.params = model.param_count();
  auto rep = model.complexity(h, w);
  r.macs = rep.macs;
  r.flops = rep.flops;
  auto rep2 = model.complexity(2 * h, 2 * w);
  r.scaling_ratio = static_cast<double>(rep2.macs) / rep.macs;

  if (measure_latency) {
    nn::NoGradGuard ng;
    nn::Tensor<float> x({1, 3, h, w});
    Rng rng(1, "bench");
    for (auto& v : x.v) v = static_cast<float>(rng.uniform());
    for (int i = 0; i < warmups; ++i) (void)model.forward(nn::Var<float>(x));
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < runs; ++i) (void)model.forward(nn::Var<float>(x));
    auto t1 = std::chrono::steady_clock::now();
    r.latency_ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count() / std::max(runs, 1);
  }
  r.peak_mem_kb = vm_peak_kb();
  return r;
}

ModelConfig model_config_from(const json& cfg_file, const std::string& variant_flag) {
  ModelConfig mc = cfg_file.contains("model") ? model_config_from_json(cfg_file.at("model"))
                                              : ModelConfig{};
  if (!variant_flag.empty()) mc.variant = variant_from_string(variant_flag);
  return mc;
}

// ---- subcommands ------------------------------------------------------------

struct SynthArgs {
  std::string images, assets, out, split = "test", sigmas = "0,15,25,50",
              alphas = "0.3,0.5,0.7,1.0", scales = "0.5:1.0", pairing = "literal",
              config;
  double coverage_max = 0.4;
  uint64_t seed = 0;
  int variants_per_image = 1;
  bool no_views = false;
};

int cmd_synth(const SynthArgs& a) {
  json cfg_file = load_config_file(a.config);
  synth::CorpusOptions opt;
  if (cfg_file.contains("synth")) opt.ranges = ranges_from_json(cfg_file.at("synth"));
  opt.split = a.split;
  opt.variants_per_image = a.variants_per_image;
  opt.pairing = pairing_mode_from_string(a.pairing);
  opt.emit_views = !a.no_views;
  opt.ranges.noise_sigma = synth::DrawRange::parse(a.sigmas);
  opt.ranges.transparency = synth::DrawRange::parse(a.alphas);
  auto colon = a.scales.find(':');
  if (colon == std::string::npos) throw std::runtime_error("--scales expects lo:hi");
  opt.ranges.scale_lo = std::stod(a.scales.substr(0, colon));
  opt.ranges.scale_hi = std::stod(a.scales.substr(colon + 1));
  opt.ranges.coverage_max = a.coverage_max;

  json resolved{{"command", "synth"},
                {"images", a.images},
                {"assets", a.assets.empty() ? "<builtin>" : a.assets},
                {"split", opt.split},
                {"variants_per_image", opt.variants_per_image},
                {"pairing", to_string(opt.pairing)},
                {"emit_views", opt.emit_views},
                {"seed", a.seed},
                {"ranges", to_json(opt.ranges)}};
  echo_config(a.out, resolved);

  auto assets = resolve_assets(a.assets, a.out);
  synth::Manifest m = synth::build_corpus(a.images, assets, opt, a.out, SeedSpec(a.seed, ""));
  uint64_t mh = hash_file((fs::path(a.out) / "manifest.jsonl").string());
  std::cout << "wrote " << m.entries.size() << " samples to " << a.out
            << "\nmanifest hash: " << std::hex << mh << std::dec << "\n";
  return 0;
}

struct TrainArgs {
  std::string corpus, run, variant, extractor, resume, config, eval_corpus;
  int epochs = -1, steps = -1, batch = -1, crop = -1, eval_every = 0;
  double lr0 = -1, alpha = -1;
  int64_t seed = -1;
  bool per_epoch_resynth = false;
};

int cmd_train(const TrainArgs& a) {
  json cfg_file = load_config_file(a.config);
  ModelConfig mc = model_config_from(cfg_file, a.variant);
  TrainConfig tc = cfg_file.contains("train") ? train_config_from_json(cfg_file.at("train"))
                                              : TrainConfig{};
  if (a.epochs >= 0) tc.epochs = a.epochs;
  if (a.steps >= 0) tc.max_steps = a.steps;
  if (a.batch >= 0) tc.batch = a.batch;
  if (a.crop >= 0) tc.crop = a.crop;
  if (a.lr0 >= 0) tc.lr0 = a.lr0;
  if (a.alpha >= 0) tc.alpha = a.alpha;
  if (a.seed >= 0) tc.seed = static_cast<uint64_t>(a.seed);
  if (!a.extractor.empty()) tc.extractor_path = a.extractor;
  if (a.per_epoch_resynth) tc.per_epoch_resynth = true;

  // Surface every validation problem in one pass.
  auto errs = mc.validate();
  auto terrs = tc.validate();
  errs.insert(errs.end(), terrs.begin(), terrs.end());
  if (!errs.empty()) {
    std::cerr << "configuration errors:\n";
    for (const auto& e : errs) std::cerr << "  - " << e << "\n";
    return 1;
  }

  json resolved{{"command", "train"}, {"corpus", a.corpus}, {"model", to_json(mc)},
                {"train", to_json(tc)}, {"resume", a.resume}};
  echo_config(a.run, resolved);

  synth::Manifest manifest = synth::Manifest::load(a.corpus);
  SshNet<float> model(mc, tc.seed);

  int start_epoch = 0, start_step = 0;
  AdamState adam;
  AdamState* adam_ptr = nullptr;
  if (!a.resume.empty()) {
    auto meta = load_checkpoint(a.resume, model, &adam);
    start_epoch = meta.epoch;
    start_step = meta.step;
    adam_ptr = &adam;
    std::cout << "resumed from " << a.resume << " at step " << start_step << "\n";
  }

  // Optional periodic evaluation against a held-out corpus.
  std::unique_ptr<synth::Manifest> eval_manifest;
  int steps_per_epoch = 0;
  if (!a.eval_corpus.empty() && a.eval_every > 0) {
    eval_manifest = std::make_unique<synth::Manifest>(synth::Manifest::load(a.eval_corpus));
    int n_train = 0;
    for (const auto& e : manifest.entries)
      if (e.split == "train") ++n_train;
    steps_per_epoch = (n_train + tc.batch - 1) / tc.batch;
  }
  std::ofstream eval_log;

  auto result = train(model, manifest, tc, a.run,
                      [&](const StepLog& sl) {
                        if (sl.step % 10 == 0)
                          std::cout << "step " << sl.step << " epoch " << sl.epoch << " lr "
                                    << sl.lr << " loss " << sl.loss.total << "\n";
                        if (eval_manifest && (sl.step + 1) % steps_per_epoch == 0 &&
                            (sl.epoch + 1) % a.eval_every == 0) {
                          auto s = evaluate(model, *eval_manifest, {});
                          std::cout << "epoch " << sl.epoch << " eval: PSNR " << s.mean_psnr
                                    << " SSIM " << s.mean_ssim << "\n";
                          if (!eval_log.is_open())
                            eval_log.open(fs::path(a.run) / "logs" / "eval.jsonl",
                                          std::ios::app);
                          eval_log << json{{"epoch", sl.epoch},
                                           {"step", sl.step},
                                           {"psnr", s.mean_psnr},
                                           {"ssim", s.mean_ssim}}
                                          .dump()
                                   << "\n";
                        }
                      },
                      start_epoch, start_step, adam_ptr);
  std::cout << "ran " << result.steps_run << " steps; last checkpoint: "
            << result.last_checkpoint << "\n";
  return 0;
}

struct EvalArgs {
  std::string corpus, checkpoint, out, extractor, config;
  bool dump_images = false;
  bool psnr_luma = false;
};

int cmd_eval(const EvalArgs& a) {
  auto meta = peek_checkpoint(a.checkpoint);
  SshNet<float> model(meta.model, 0);
  load_checkpoint(a.checkpoint, model, nullptr);

  json resolved{{"command", "eval"},
                {"corpus", a.corpus},
                {"checkpoint", a.checkpoint},
                {"model", to_json(meta.model)},
                {"dump_images", a.dump_images},
                {"extractor", a.extractor}};
  echo_config(a.out, resolved);

  synth::Manifest manifest = synth::Manifest::load(a.corpus);
  EvalOptions opts;
  opts.out_dir = a.out;
  opts.dump_images = a.dump_images;
  opts.extractor_path = a.extractor;
  opts.psnr_on_luma = a.psnr_luma;
  auto summary = evaluate(model, manifest, opts);

  std::cout << "evaluated " << summary.items.size() << " samples, " << summary.failures
            << " failures\n";
  std::cout << "mean PSNR " << summary.mean_psnr << " dB (degraded input: "
            << summary.mean_degradation_psnr << " dB)\nmean SSIM " << summary.mean_ssim
            << "\n";
  if (summary.mean_lpips) std::cout << "mean LPIPS " << *summary.mean_lpips << "\n";
  for (const auto& [cond, grp] : summary.by_condition)
    std::cout << "  " << cond << ": PSNR " << grp.psnr << " SSIM " << grp.ssim << " (n="
              << grp.count << ")\n";
  return summary.failures == 0 ? 0 : 1;
}

struct BenchArgs {
  std::string variant = "full", json_out, config;
  int height = 256, width = 256, runs = 50, warmups = 10;
  bool no_latency = false;
};

int cmd_bench(const BenchArgs& a) {
  json cfg_file = load_config_file(a.config);
  ModelConfig mc = model_config_from(cfg_file, a.variant);
  auto r = run_bench(mc, a.height, a.width, a.runs, a.warmups, !a.no_latency);

  std::cout << "variant " << to_string(mc.variant) << " @ " << a.height << "x" << a.width
            << "\n";
  std::cout << "parameters: " << r.params << " (" << r.params / 1e6 << "M)\n";
  std::cout << "MACs: " << r.macs << " (" << r.macs / 1e9
            << "G, the convention of the reported figures)\n";
  std::cout << "FLOPs (2xMAC): " << r.flops << " (" << r.flops / 1e9 << "G)\n";
  std::cout << "MAC scaling at 2x resolution: " << r.scaling_ratio << " (conv-dominated ~4)\n";

  json out{{"variant", to_string(mc.variant)}, {"height", a.height}, {"width", a.width},
           {"params", r.params},               {"macs", r.macs},     {"flops_2xmac", r.flops},
           {"scaling_ratio", r.scaling_ratio}, {"peak_mem_kb", r.peak_mem_kb}};

  bool is_default_full = mc.variant == Variant::full && mc.base_width == 48 &&
                         mc.level_depths == std::array<int, 5>{2, 4, 4, 6, 6};
  if (is_default_full && a.height == 256 && a.width == 256) {
    bool params_ok = std::abs(r.params / 5.89e6 - 1.0) <= 0.20;
    bool macs_ok = std::abs(r.macs / 18.21e9 - 1.0) <= 0.25;
    std::cout << "reference check: params vs 5.89M +-20%: " << (params_ok ? "PASS" : "FAIL")
              << "; complexity vs 18.21G +-25%: " << (macs_ok ? "PASS" : "FAIL") << "\n";
    out["reference_params_pass"] = params_ok;
    out["reference_macs_pass"] = macs_ok;

    ModelConfig dual = mc;
    dual.variant = Variant::dual_encoders;
    auto rd = run_bench(dual, a.height, a.width, 0, 0, false);
    std::cout << "dual_encoders: " << rd.params / 1e6 << "M params, " << rd.macs / 1e9
              << "G MACs (strictly above full: "
              << ((rd.params > r.params && rd.macs > r.macs) ? "yes" : "NO") << ")\n";
    out["dual_encoders"] = {{"params", rd.params}, {"macs", rd.macs}};
  }
  if (!a.no_latency) {
    std::cout << "forward latency: " << r.latency_ms << " ms (mean of " << a.runs
              << " runs after " << a.warmups << " warmups; informational)\n";
    std::cout << "peak RSS: " << r.peak_mem_kb / 1024.0 << " MB (informational)\n";
    out["latency_ms"] = r.latency_ms;
  }
  if (!a.json_out.empty()) {
    fs::path p(a.json_out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(a.json_out);
    f << out.dump(2) << "\n";
  }
  return 0;
}

struct AblateArgs {
  std::string corpus, eval_corpus, run, variants = "se_nrd_only,se_wnrd_only,dual_no_ffu,full,dense_mdta,dual_encoders";
  std::string extractor, config;
  int steps = 200, batch = 2, crop = 64;
  double alpha = 0.0;
  uint64_t seed = 0;
};

int cmd_ablate(const AblateArgs& a) {
  json cfg_file = load_config_file(a.config);
  json resolved{{"command", "ablate"}, {"corpus", a.corpus},   {"eval_corpus", a.eval_corpus},
                {"variants", a.variants}, {"steps", a.steps},  {"batch", a.batch},
                {"crop", a.crop},         {"alpha", a.alpha},  {"seed", a.seed}};
  echo_config(a.run, resolved);

  synth::Manifest train_manifest = synth::Manifest::load(a.corpus);
  synth::Manifest eval_manifest = synth::Manifest::load(a.eval_corpus);
  uint64_t corpus_hash = hash_file(a.corpus);

  std::vector<std::string> names;
  {
    std::stringstream ss(a.variants);
    std::string tok;
    while (std::getline(ss, tok, ',')) names.push_back(tok);
  }

  struct Row {
    std::string variant;
    int64_t params = 0;
    double psnr = 0, ssim = 0;
    bool failed = false;
    std::string error;
  };
  std::vector<Row> rows;

  for (const auto& name : names) {
    Row row;
    row.variant = name;
    try {
      ModelConfig mc = model_config_from(cfg_file, name);
      TrainConfig tc = cfg_file.contains("train")
                           ? train_config_from_json(cfg_file.at("train"))
                           : TrainConfig{};
      tc.max_steps = a.steps;
      tc.epochs = 1000000;
      tc.batch = a.batch;
      tc.crop = a.crop;
      tc.alpha = a.alpha;
      tc.seed = a.seed;  // shared seed across variants
      tc.extractor_path = a.extractor;
      tc.checkpoint_every_epochs = 1000000;

      SshNet<float> model(mc, tc.seed);
      row.params = model.param_count();
      std::string run_dir = (fs::path(a.run) / name).string();
      train(model, train_manifest, tc, run_dir);

      EvalOptions eo;
      eo.out_dir = (fs::path(run_dir) / "eval").string();
      auto summary = evaluate(model, eval_manifest, eo);
      row.psnr = summary.mean_psnr;
      row.ssim = summary.mean_ssim;
      std::cout << name << ": PSNR " << row.psnr << " SSIM " << row.ssim << "\n";
    } catch (const std::exception& ex) {
      row.failed = true;
      row.error = ex.what();
      std::cerr << name << " failed: " << ex.what() << "\n";
    }
    rows.push_back(std::move(row));
  }

  std::ofstream md(fs::path(a.run) / "ablation.md");
  md << "# Ablation sweep\n\ncorpus hash: `" << std::hex << corpus_hash << std::dec
     << "` (identical bytes for every variant)\n\n";
  md << "| variant | params | PSNR | SSIM |\n|---|---|---|---|\n";
  std::ofstream csv(fs::path(a.run) / "ablation.csv");
  csv << "variant,params,psnr,ssim,error\n";
  for (const auto& r : rows) {
    if (r.failed) {
      md << "| " << r.variant << " | - | failed | failed |\n";
      csv << r.variant << ",,,," << r.error << "\n";
    } else {
      md << "| " << r.variant << " | " << r.params << " | " << r.psnr << " | " << r.ssim
         << " |\n";
      csv << r.variant << "," << r.params << "," << r.psnr << "," << r.ssim << ",\n";
    }
  }
  std::cout << "wrote " << (fs::path(a.run) / "ablation.md").string() << "\n";
  bool any_failed = false;
  for (const auto& r : rows) any_failed = any_failed || r.failed;
  return any_failed ? 1 : 0;
}

struct GatesArgs {
  std::string checkpoint, images, out;
};

int cmd_gates(const GatesArgs& a) {
  auto meta = peek_checkpoint(a.checkpoint);
  SshNet<float> model(meta.model, 0);
  load_checkpoint(a.checkpoint, model, nullptr);

  json resolved{{"command", "gates"}, {"checkpoint", a.checkpoint}, {"images", a.images}};
  echo_config(a.out, resolved);

  std::vector<fs::path> files;
  for (const auto& ent : fs::directory_iterator(a.images))
    if (ent.is_regular_file() && ent.path().extension() == ".png") files.push_back(ent.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no PNG images in " + a.images);

  std::vector<Image> rows;
  json stats = json::array();
  for (const auto& f : files) {
    Image img = load_image(f.string());
    auto gm = extract_gate_maps(model, img);
    Image heat = render_gray(gm.plane, gm.height, gm.width);
    std::string stem = f.stem().string();
    save_image(heat, (fs::path(a.out) / (stem + "_gate.png")).string());
    Image restored = infer_tiled(model, img);
    rows.push_back(montage_row({clamp01(img), restored, heat}));
    stats.push_back({{"id", stem},
                     {"fraction_below_half", gm.fraction_below_half},
                     {"mean", gm.mean},
                     {"stddev", gm.stddev}});
    std::cout << stem << ": gate weights below 0.5: " << gm.fraction_below_half * 100
              << "%\n";
  }
  save_image(stack_rows(rows), (fs::path(a.out) / "montage.png").string());
  std::ofstream jf(fs::path(a.out) / "gates.json");
  jf << stats.dump(2) << "\n";
  std::cout << "wrote montage (" << rows.size() << " rows x 3 panels) to " << a.out << "\n";
  return 0;
}

int cmd_assets(const std::string& out) {
  fs::create_directories(out);
  auto assets = synth::make_default_assets();
  for (const auto& a : assets)
    save_asset(a, (fs::path(out) / (a.name + ".png")).string());
  std::cout << "wrote " << assets.size() << " watermark assets to " << out << "\n";
  return 0;
}

int cmd_demo_images(const std::string& out, int count, int size, uint64_t seed) {
  fs::create_directories(out);
  for (int i = 0; i < count; ++i) {
    Image s = synth::make_synthetic_scene(size, size, SeedSpec(seed, "demo:" + std::to_string(i)));
    char name[32];
    std::snprintf(name, sizeof(name), "scene%03d.png", i);
    save_image(s, (fs::path(out) / name).string(), BitDepth::u16);
  }
  std::cout << "wrote " << count << " synthetic scenes (" << size << "x" << size << ") to "
            << out << "\n";
  return 0;
}

struct DescribeArgs {
  std::string variant = "full", json_out, config;
  int height = 256, width = 256;
};

int cmd_describe(const DescribeArgs& a) {
  json cfg_file = load_config_file(a.config);
  ModelConfig mc = model_config_from(cfg_file, a.variant);
  SshNet<float> model(mc, 0);
  auto rep = model.complexity(a.height, a.width);

  json j{{"model", to_json(mc)},
         {"params", rep.params},
         {"macs", rep.macs},
         {"flops_2xmac", rep.flops},
         {"resolution", {a.height, a.width}},
         {"st_widths", mc.st_widths()},
         {"st_depths",
          {mc.level_depths[2], mc.level_depths[3], mc.level_depths[4], mc.level_depths[3],
           mc.level_depths[2]}},
         {"parts", json::array()}};
  for (const auto& p : rep.parts)
    j["parts"].push_back({{"name", p.name}, {"params", p.params}, {"macs", p.macs}});
  if (!a.json_out.empty()) {
    std::ofstream f(a.json_out);
    f << j.dump(2) << "\n";
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SSH-Net: self-supervised watermark and noise removal"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "build a corrupted training/test corpus");
  synth_cmd->add_option("--images", sa.images, "directory of clean RGB PNGs")->required();
  synth_cmd->add_option("--assets", sa.assets, "directory of RGBA watermark PNGs (default: built-ins)");
  synth_cmd->add_option("--out", sa.out, "output corpus directory")->required();
  synth_cmd->add_option("--split", sa.split, "train|test");
  synth_cmd->add_option("--sigmas", sa.sigmas, "noise sigmas: list 0,15,25,50 or range 0:55");
  synth_cmd->add_option("--alphas", sa.alphas, "transparencies: list or range lo:hi");
  synth_cmd->add_option("--scales", sa.scales, "watermark scale range lo:hi");
  synth_cmd->add_option("--coverage-max", sa.coverage_max, "max footprint area fraction");
  synth_cmd->add_option("--seed", sa.seed, "corpus seed");
  synth_cmd->add_option("--pairing-mode", sa.pairing, "literal|independent");
  synth_cmd->add_option("--variants-per-image", sa.variants_per_image, "train-split draws per image");
  synth_cmd->add_flag("--no-views", sa.no_views, "skip 8-bit inspection copies");
  synth_cmd->add_option("--config", sa.config, "JSON config file");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "optimize a model on a corpus");
  train_cmd->add_option("--corpus", ta.corpus, "train manifest.jsonl")->required();
  train_cmd->add_option("--run", ta.run, "run directory")->required();
  train_cmd->add_option("--variant", ta.variant, "full|se_nrd_only|se_wnrd_only|dual_no_ffu|dense_mdta|dual_encoders");
  train_cmd->add_option("--epochs", ta.epochs);
  train_cmd->add_option("--steps", ta.steps, "total global step budget (0 = by epochs)");
  train_cmd->add_option("--batch", ta.batch);
  train_cmd->add_option("--crop", ta.crop);
  train_cmd->add_option("--lr0", ta.lr0);
  train_cmd->add_option("--alpha", ta.alpha, "texture loss weight (0 = offline, no extractor)");
  train_cmd->add_option("--seed", ta.seed);
  train_cmd->add_option("--extractor", ta.extractor, "perceptual extractor weight file");
  train_cmd->add_option("--resume", ta.resume, "checkpoint to continue from");
  train_cmd->add_flag("--per-epoch-resynth", ta.per_epoch_resynth,
                      "re-draw corruptions each epoch from source images");
  train_cmd->add_option("--eval-corpus", ta.eval_corpus, "test manifest for periodic eval");
  train_cmd->add_option("--eval-every", ta.eval_every, "evaluate every N epochs (0 = off)");
  train_cmd->add_option("--config", ta.config, "JSON config file");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a test corpus");
  eval_cmd->add_option("--corpus", ea.corpus, "test manifest.jsonl")->required();
  eval_cmd->add_option("--checkpoint", ea.checkpoint)->required();
  eval_cmd->add_option("--out", ea.out, "metrics output directory")->required();
  eval_cmd->add_flag("--dump-images", ea.dump_images, "write restored PNG triplets");
  eval_cmd->add_flag("--psnr-luma", ea.psnr_luma, "compute PSNR on luma instead of RGB");
  eval_cmd->add_option("--extractor", ea.extractor, "enables LPIPS");
  eval_cmd->add_option("--config", ea.config);

  BenchArgs ba;
  auto* bench_cmd = app.add_subcommand("bench", "parameter/FLOP accounting and latency");
  bench_cmd->add_option("--variant", ba.variant);
  bench_cmd->add_option("--height", ba.height);
  bench_cmd->add_option("--width", ba.width);
  bench_cmd->add_option("--runs", ba.runs, "latency sample count");
  bench_cmd->add_option("--warmups", ba.warmups);
  bench_cmd->add_flag("--no-latency", ba.no_latency, "skip wall-clock measurement");
  bench_cmd->add_option("--json", ba.json_out, "dump the report as JSON");
  bench_cmd->add_option("--config", ba.config);

  AblateArgs aa;
  auto* ablate_cmd = app.add_subcommand("ablate", "train/evaluate the component ablations");
  ablate_cmd->add_option("--corpus", aa.corpus, "train manifest")->required();
  ablate_cmd->add_option("--eval-corpus", aa.eval_corpus, "test manifest")->required();
  ablate_cmd->add_option("--run", aa.run, "output directory")->required();
  ablate_cmd->add_option("--variants", aa.variants, "comma list of variants");
  ablate_cmd->add_option("--steps", aa.steps);
  ablate_cmd->add_option("--batch", aa.batch);
  ablate_cmd->add_option("--crop", aa.crop);
  ablate_cmd->add_option("--alpha", aa.alpha);
  ablate_cmd->add_option("--seed", aa.seed, "shared seed for all variants");
  ablate_cmd->add_option("--extractor", aa.extractor);
  ablate_cmd->add_option("--config", aa.config);

  GatesArgs ga;
  auto* gates_cmd = app.add_subcommand("gates", "gate-map heat maps and montage");
  gates_cmd->add_option("--checkpoint", ga.checkpoint)->required();
  gates_cmd->add_option("--images", ga.images, "directory of input PNGs")->required();
  gates_cmd->add_option("--out", ga.out)->required();

  std::string assets_out;
  auto* assets_cmd = app.add_subcommand("assets", "write the 12 built-in watermark assets");
  assets_cmd->add_option("--out", assets_out)->required();

  std::string demo_out;
  int demo_count = 8, demo_size = 192;
  uint64_t demo_seed = 0;
  auto* demo_cmd = app.add_subcommand("demo-images", "generate synthetic clean scenes");
  demo_cmd->add_option("--out", demo_out)->required();
  demo_cmd->add_option("--count", demo_count);
  demo_cmd->add_option("--size", demo_size);
  demo_cmd->add_option("--seed", demo_seed);

  DescribeArgs da;
  auto* describe_cmd = app.add_subcommand("describe", "per-stage architecture report");
  describe_cmd->add_option("--variant", da.variant);
  describe_cmd->add_option("--height", da.height);
  describe_cmd->add_option("--width", da.width);
  describe_cmd->add_option("--json", da.json_out);
  describe_cmd->add_option("--config", da.config);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) return cmd_synth(sa);
    if (train_cmd->parsed()) return cmd_train(ta);
    if (eval_cmd->parsed()) return cmd_eval(ea);
    if (bench_cmd->parsed()) return cmd_bench(ba);
    if (ablate_cmd->parsed()) return cmd_ablate(aa);
    if (gates_cmd->parsed()) return cmd_gates(ga);
    if (assets_cmd->parsed()) return cmd_assets(assets_out);
    if (demo_cmd->parsed()) return cmd_demo_images(demo_out, demo_count, demo_size, demo_seed);
    if (describe_cmd->parsed()) return cmd_describe(da);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
