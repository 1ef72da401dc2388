#include "sshnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <unordered_map>

#include "sshnet/config_json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sshnet {

// ---- schedule -----------------------------------------------------------------

double lr_schedule(const TrainConfig& cfg, int epoch) {
  if (epoch < 0 || epoch >= cfg.epochs)
    throw std::out_of_range("lr_schedule: epoch " + std::to_string(epoch) +
                            " outside [0," + std::to_string(cfg.epochs) + ")");
  int decays = epoch / cfg.decay_every_epochs;
  return cfg.lr0 * std::pow(cfg.decay_factor, decays);
}

std::vector<std::string> TrainConfig::validate() const {
  std::vector<std::string> errs;
  if (lr0 <= 0) errs.push_back("lr0 must be positive");
  if (decay_factor <= 0 || decay_factor > 1) errs.push_back("decay_factor must be in (0,1]");
  if (decay_every_epochs < 1) errs.push_back("decay_every_epochs must be >= 1");
  if (epochs < 1) errs.push_back("epochs must be >= 1");
  if (batch < 1) errs.push_back("batch must be >= 1");
  if (crop < 16 || crop % 16 != 0) errs.push_back("crop must be a positive multiple of 16");
  if (alpha < 0) errs.push_back("alpha must be >= 0");
  if (alpha > 0 && extractor_path.empty())
    errs.push_back("alpha > 0 requires an extractor (set extractor_path or use alpha 0)");
  if (max_steps < 0) errs.push_back("max_steps must be >= 0");
  return errs;
}

// ---- Adam ----------------------------------------------------------------------

void AdamState::init(const nn::ParamRegistry<float>& reg) {
  m_.clear();
  v_.clear();
  for (const auto& p : reg.all()) {
    m_.emplace_back(p.val().numel(), 0.f);
    v_.emplace_back(p.val().numel(), 0.f);
  }
  t = 0;
}

void AdamState::step(nn::ParamRegistry<float>& reg, double lr, const TrainConfig& cfg) {
  ++t;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (size_t pi = 0; pi < reg.all().size(); ++pi) {
    auto& p = reg.all()[pi];
    float* w = p.val().data();
    const float* g = p.grad().data();
    float* m = m_[pi].data();
    float* v = v_[pi].data();
    const int64_t n = p.val().numel();
    for (int64_t i = 0; i < n; ++i) {
      double gi = g[i];
      double mi = b1 * m[i] + (1.0 - b1) * gi;
      double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      double mhat = mi / bc1;
      double vhat = vi / bc2;
      w[i] = static_cast<float>(w[i] - lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
    }
  }
}

// ---- checkpoint -----------------------------------------------------------------

namespace {

constexpr char kCkptMagic[8] = {'S', 'S', 'H', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<char*>(b), 8);
}

uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_tensor(std::ostream& os, const std::string& name, uint8_t kind,
                  const std::vector<int>& shape, const float* data, int64_t count) {
  write_u64(os, name.size());
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  os.put(static_cast<char>(kind));
  write_u64(os, shape.size());
  for (int d : shape) write_u64(os, static_cast<uint64_t>(d));
  write_u64(os, static_cast<uint64_t>(count));
  os.write(reinterpret_cast<const char*>(data),
           static_cast<std::streamsize>(count * sizeof(float)));
}

json meta_to_json(const CheckpointMeta& meta) {
  return json{{"schema_version", meta.schema_version}, {"model", to_json(meta.model)},
              {"train", to_json(meta.train)},           {"epoch", meta.epoch},
              {"step", meta.step},                      {"best_psnr", meta.best_psnr}};
}

CheckpointMeta meta_from_json(const json& j) {
  CheckpointMeta meta;
  meta.schema_version = j.at("schema_version").get<int>();
  if (meta.schema_version != 1)
    throw std::runtime_error("unsupported checkpoint schema version " +
                             std::to_string(meta.schema_version));
  meta.model = model_config_from_json(j.at("model"));
  meta.train = train_config_from_json(j.at("train"));
  meta.epoch = j.at("epoch").get<int>();
  meta.step = j.at("step").get<int>();
  meta.best_psnr = j.value("best_psnr", -1.0);
  return meta;
}

}  // namespace

void save_checkpoint(const std::string& path, const SshNet<float>& model,
                     const AdamState& adam, const CheckpointMeta& meta) {
  fs::create_directories(fs::path(path).parent_path().empty()
                             ? "."
                             : fs::path(path).parent_path().string());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f.write(kCkptMagic, 8);
  std::string ms = meta_to_json(meta).dump();
  write_u64(f, ms.size());
  f.write(ms.data(), static_cast<std::streamsize>(ms.size()));

  const auto& params = model.params().all();
  uint64_t tensor_count = params.size() + (adam.initialized() ? 2 * params.size() : 0);
  write_u64(f, tensor_count);
  write_u64(f, static_cast<uint64_t>(adam.t));
  for (const auto& p : params)
    write_tensor(f, p.name(), 0, p.val().shape, p.val().data(), p.val().numel());
  if (adam.initialized()) {
    for (size_t i = 0; i < params.size(); ++i) {
      const auto& p = params[i];
      write_tensor(f, p.name(), 1, p.val().shape, adam.m_[i].data(),
                   static_cast<int64_t>(adam.m_[i].size()));
      write_tensor(f, p.name(), 2, p.val().shape, adam.v_[i].data(),
                   static_cast<int64_t>(adam.v_[i].size()));
    }
  }
  if (!f) throw std::runtime_error("failed while writing checkpoint: " + path);
}

namespace {

struct RawTensor {
  std::string name;
  uint8_t kind;
  std::vector<int> shape;
  std::vector<float> data;
};

CheckpointMeta read_header(std::ifstream& f, const std::string& path) {
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  uint64_t mlen = read_u64(f);
  std::string ms(mlen, '\0');
  f.read(ms.data(), static_cast<std::streamsize>(mlen));
  return meta_from_json(json::parse(ms));
}

}  // namespace

CheckpointMeta peek_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  return read_header(f, path);
}

CheckpointMeta load_checkpoint(const std::string& path, SshNet<float>& model,
                               AdamState* adam) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  CheckpointMeta meta = read_header(f, path);

  uint64_t tensor_count = read_u64(f);
  uint64_t adam_t = read_u64(f);

  auto& params = model.params().all();
  std::unordered_map<std::string, size_t> index;
  for (size_t i = 0; i < params.size(); ++i) index[params[i].name()] = i;

  if (adam) {
    adam->init(model.params());
    adam->t = static_cast<int64_t>(adam_t);
  }

  size_t params_loaded = 0;
  for (uint64_t ti = 0; ti < tensor_count; ++ti) {
    RawTensor rt;
    uint64_t nlen = read_u64(f);
    rt.name.resize(nlen);
    f.read(rt.name.data(), static_cast<std::streamsize>(nlen));
    rt.kind = static_cast<uint8_t>(f.get());
    uint64_t ndim = read_u64(f);
    rt.shape.resize(ndim);
    for (auto& d : rt.shape) d = static_cast<int>(read_u64(f));
    uint64_t count = read_u64(f);
    rt.data.resize(count);
    f.read(reinterpret_cast<char*>(rt.data.data()),
           static_cast<std::streamsize>(count * sizeof(float)));
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);

    auto it = index.find(rt.name);
    if (it == index.end())
      throw std::runtime_error("checkpoint tensor '" + rt.name +
                               "' has no counterpart in the model (variant mismatch?)");
    auto& p = params[it->second];
    if (p.val().shape != rt.shape) {
      auto fmt = [](const std::vector<int>& s) {
        std::string r = "[";
        for (size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
        return r + "]";
      };
      throw std::runtime_error("checkpoint shape mismatch for tensor '" + rt.name +
                               "': file " + fmt(rt.shape) + " vs model " +
                               fmt(p.val().shape));
    }
    if (rt.kind == 0) {
      std::copy(rt.data.begin(), rt.data.end(), p.val().v.begin());
      ++params_loaded;
    } else if (adam) {
      auto& dst = rt.kind == 1 ? adam->m_[it->second] : adam->v_[it->second];
      std::copy(rt.data.begin(), rt.data.end(), dst.begin());
    }
  }
  if (params_loaded != params.size())
    throw std::runtime_error("checkpoint is missing " +
                             std::to_string(params.size() - params_loaded) +
                             " parameter tensors");
  return meta;
}

// ---- training loop -----------------------------------------------------------------

namespace {

struct SampleCache {
  std::unordered_map<std::string, Image> images;
  const Image& get(const synth::Manifest& manifest, const std::string& rel,
                   const std::string& role) {
    std::string path = manifest.resolve(rel);
    auto it = images.find(path);
    if (it != images.end()) return it->second;
    auto [ins, ok] = images.emplace(path, load_image_tagged(path, role));
    return ins->second;
  }
};

Image crop_image(const Image& img, int top, int left, int size) {
  Image out(size, size);
  out.id = img.id;
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c)
      for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = img.at(top + r, left + c, ch);
  return out;
}

Image hflip_image(const Image& img) {
  Image out(img.height, img.width);
  out.id = img.id;
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = img.at(r, img.width - 1 - c, ch);
  return out;
}

void fill_batch_plane(nn::Tensor<float>& dst, int slot, const Image& img) {
  const int64_t plane = static_cast<int64_t>(img.height) * img.width;
  for (int ch = 0; ch < 3; ++ch) {
    float* d = dst.chan(slot, ch);
    for (int64_t i = 0; i < plane; ++i) d[i] = img.px[i * 3 + ch];
  }
}

}  // namespace

TrainResult train(SshNet<float>& model, const synth::Manifest& manifest,
                  const TrainConfig& cfg, const std::string& run_dir,
                  const StepCallback& on_step, int start_epoch, int start_step,
                  AdamState* resume_adam) {
  {
    auto errs = cfg.validate();
    if (!errs.empty()) {
      std::string msg = "invalid train config:";
      for (const auto& e : errs) msg += "\n  - " + e;
      throw std::invalid_argument(msg);
    }
  }

  std::vector<synth::ManifestEntry> entries;
  for (const auto& e : manifest.entries)
    if (e.split == "train") entries.push_back(e);
  if (entries.empty())
    throw std::runtime_error("train: manifest has no train split entries");
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });

  std::unique_ptr<FeatureExtractor> fx;
  if (cfg.alpha > 0) fx = std::make_unique<FeatureExtractor>(FeatureExtractor::load(cfg.extractor_path));

  fs::create_directories(fs::path(run_dir) / "checkpoints");
  fs::create_directories(fs::path(run_dir) / "logs");
  std::ofstream log_file(fs::path(run_dir) / "logs" / "train.jsonl",
                         start_step > 0 ? std::ios::app : std::ios::trunc);

  SampleCache cache;
  std::vector<WatermarkAsset> resynth_assets;
  if (cfg.per_epoch_resynth) resynth_assets = synth::make_default_assets();

  // Effective crop: the largest 16-multiple that fits every training image.
  int eff_crop = cfg.crop;
  if (!cfg.per_epoch_resynth) {
    for (const auto& e : entries) {
      const Image& probe = cache.get(manifest, e.x_w, "x_w");
      int m = std::min(probe.height, probe.width) / 16 * 16;
      eff_crop = std::min(eff_crop, m);
    }
  } else {
    for (const auto& e : entries) {
      Image src = load_image_tagged(e.source, "synth_source");
      int m = std::min(src.height, src.width) / 16 * 16;
      eff_crop = std::min(eff_crop, m);
    }
  }
  if (eff_crop < 16) throw std::runtime_error("train: images too small for a 16px crop");

  const int n = static_cast<int>(entries.size());
  const int steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  const SeedSpec root(cfg.seed, "train");

  AdamState local_adam;
  AdamState& adam = resume_adam ? *resume_adam : local_adam;
  if (!adam.initialized()) adam.init(model.params());

  TrainResult result;
  result.final_epoch = start_epoch;

  auto save_ckpt = [&](int epoch, int step, const std::string& name) {
    CheckpointMeta meta;
    meta.model = model.config();
    meta.train = cfg;
    meta.epoch = epoch;
    meta.step = step;
    std::string path = (fs::path(run_dir) / "checkpoints" / name).string();
    save_checkpoint(path, model, adam, meta);
    std::string latest = (fs::path(run_dir) / "checkpoints" / "latest.ckpt").string();
    save_checkpoint(latest, model, adam, meta);
    result.last_checkpoint = path;
  };

  int step = start_step;
  int epoch = step / steps_per_epoch;
  std::vector<int> order(n);
  int shuffled_epoch = -1;

  auto ensure_epoch_order = [&](int e) {
    if (shuffled_epoch == e) return;
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng rng(root.fork("shuffle", static_cast<uint64_t>(e)));
    for (int i = n - 1; i > 0; --i) {
      int j = static_cast<int>(rng.uniform_int(0, i));
      std::swap(order[i], order[j]);
    }
    shuffled_epoch = e;
  };

  auto should_continue = [&](int s) {
    int e = s / steps_per_epoch;
    if (e >= cfg.epochs) return false;
    if (cfg.max_steps > 0 && s >= cfg.max_steps) return false;
    return true;
  };

  while (should_continue(step)) {
    epoch = step / steps_per_epoch;
    ensure_epoch_order(epoch);
    const int pos = step % steps_per_epoch;
    const int b0 = pos * cfg.batch;
    const int bsz = std::min(cfg.batch, n - b0);

    nn::Tensor<float> x_wn({bsz, 3, eff_crop, eff_crop});
    nn::Tensor<float> x_w({bsz, 3, eff_crop, eff_crop});
    nn::Tensor<float> y_w({bsz, 3, eff_crop, eff_crop});

    for (int s = 0; s < bsz; ++s) {
      const auto& entry = entries[order[b0 + s]];
      const Image* img_wn;
      const Image* img_w;
      const Image* img_yw;
      std::unique_ptr<synth::SamplePair> fresh;
      if (cfg.per_epoch_resynth) {
        Image src = load_image_tagged(entry.source, "synth_source");
        fresh = std::make_unique<synth::SamplePair>(synth::make_sample(
            src, resynth_assets, cfg.resynth_ranges,
            root.fork("resynth:" + std::to_string(epoch) + "/" + entry.id),
            model.config().pairing_mode));
        img_wn = &fresh->x_wn;
        img_w = &fresh->x_w;
        img_yw = &fresh->y_w;
      } else {
        img_wn = &cache.get(manifest, entry.x_wn, "x_wn");
        img_w = &cache.get(manifest, entry.x_w, "x_w");
        img_yw = &cache.get(manifest, entry.y_w, "y_w");
      }

      Rng crng(root.fork("crop:" + std::to_string(step) + ":" + std::to_string(s)));
      int top = img_wn->height > eff_crop
                    ? static_cast<int>(crng.uniform_int(0, img_wn->height - eff_crop))
                    : 0;
      int left = img_wn->width > eff_crop
                     ? static_cast<int>(crng.uniform_int(0, img_wn->width - eff_crop))
                     : 0;
      bool flip = cfg.hflip && crng.uniform() < 0.5;

      auto prep = [&](const Image& im) {
        Image c = crop_image(im, top, left, eff_crop);
        return flip ? hflip_image(c) : c;
      };
      fill_batch_plane(x_wn, s, prep(*img_wn));
      fill_batch_plane(x_w, s, prep(*img_w));
      fill_batch_plane(y_w, s, prep(*img_yw));
    }

    auto outs = model.forward(nn::Var<float>(std::move(x_wn)));
    auto loss = mixed_loss(outs, nn::Var<float>(std::move(x_w)),
                           nn::Var<float>(std::move(y_w)), cfg.alpha, fx.get(),
                           model.config().variant);

    model.params().zero_grad();
    nn::backward(loss.total);
    double lr = lr_schedule(cfg, epoch);
    adam.step(model.params(), lr, cfg);

    StepLog sl;
    sl.step = step;
    sl.epoch = epoch;
    sl.lr = lr;
    sl.loss = loss.values;
    result.logs.push_back(sl);
    if (log_file) {
      json j{{"step", sl.step},          {"epoch", sl.epoch},
             {"lr", sl.lr},              {"l_s1", sl.loss.l_s1},
             {"l_s2", sl.loss.l_s2},     {"l_s3", sl.loss.l_s3},
             {"l_t1", sl.loss.l_t1},     {"l_t2", sl.loss.l_t2},
             {"total", sl.loss.total}};
      log_file << j.dump() << "\n";
    }
    if (on_step) on_step(sl);

    ++step;
    ++result.steps_run;
    result.final_epoch = epoch;

    bool epoch_boundary = step % steps_per_epoch == 0;
    if (epoch_boundary && ((epoch + 1) % cfg.checkpoint_every_epochs == 0)) {
      char name[64];
      std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", epoch);
      save_ckpt(epoch + 1, step, name);
    }
  }

  save_ckpt(step / steps_per_epoch, step, "final.ckpt");
  return result;
}

// ---- evaluation -----------------------------------------------------------------------

double degradation_baseline(const synth::Manifest& manifest) {
  double acc = 0.0;
  int count = 0;
  for (const auto& e : manifest.entries) {
    if (e.y_clean.empty()) continue;
    Image x = load_image_tagged(manifest.resolve(e.x_wn), "x_wn");
    Image y = load_image_tagged(manifest.resolve(e.y_clean), "y_clean");
    double p = psnr(clamp01(x), y);
    if (std::isfinite(p)) {
      acc += p;
      ++count;
    }
  }
  if (count == 0) throw std::runtime_error("degradation_baseline: no evaluable entries");
  return acc / count;
}

EvalSummary evaluate(const SshNet<float>& model, const synth::Manifest& manifest,
                     const EvalOptions& opts) {
  std::unique_ptr<FeatureExtractor> fx;
  if (!opts.extractor_path.empty() && fs::exists(opts.extractor_path)) {
    try {
      fx = std::make_unique<FeatureExtractor>(FeatureExtractor::load(opts.extractor_path));
    } catch (const std::exception&) {
      fx.reset();  // metric reported absent, not a failure
    }
  }

  EvalSummary summary;
  if (!opts.out_dir.empty()) fs::create_directories(fs::path(opts.out_dir) / "images");

  for (const auto& e : manifest.entries) {
    EvalItem item;
    item.id = e.id;
    item.sigma = e.spec.noise_sigma;
    item.transparency = e.spec.transparency;
    try {
      if (e.y_clean.empty())
        throw std::runtime_error("entry has no clean reference (train-split corpus?)");
      Image x_wn = load_image_tagged(manifest.resolve(e.x_wn), "x_wn");
      Image y_clean = load_image_tagged(manifest.resolve(e.y_clean), "y_clean");
      Image restored = infer_tiled(model, x_wn);

      item.metrics.id = e.id;
      item.metrics.psnr = opts.psnr_on_luma ? psnr_luma(restored, y_clean)
                                            : psnr(restored, y_clean);
      item.metrics.ssim = ssim_y(restored, y_clean);
      if (fx) item.metrics.lpips = lpips(restored, y_clean, *fx);
      item.degradation_psnr = opts.psnr_on_luma ? psnr_luma(clamp01(x_wn), y_clean)
                                                : psnr(clamp01(x_wn), y_clean);

      if (opts.dump_images && !opts.out_dir.empty()) {
        nn::NoGradGuard ng;
        nn::Tensor<float> xt = image_to_tensor<float>(x_wn);
        int ph = (16 - x_wn.height % 16) % 16, pw = (16 - x_wn.width % 16) % 16;
        if (ph || pw) xt = nn::reflect_pad2(xt, 0, ph, 0, pw);
        auto outs = model.forward(nn::Var<float>(std::move(xt)));
        auto dump = [&](const nn::Var<float>& v, const std::string& tag) {
          if (!v.defined()) return;
          nn::Tensor<float> t = v.val();
          if (ph || pw) t = nn::crop2(t, 0, 0, x_wn.height, x_wn.width);
          Image im = tensor_to_image<float>(t, 0);
          for (float& p : im.px) p = std::min(std::max(p, 0.f), 1.f);
          save_image(im, (fs::path(opts.out_dir) / "images" / (e.id + "_" + tag + ".png")).string());
        };
        dump(outs.y_n, "y_n");
        dump(outs.y_wn, "y_wn");
        dump(outs.y_hat, "y_hat");
      }
    } catch (const std::exception& ex) {
      item.failed = true;
      item.error = ex.what();
      ++summary.failures;
    }
    summary.items.push_back(std::move(item));
  }

  // Aggregate, skipping failures and +inf PSNR sentinels explicitly.
  std::vector<double> psnrs, ssims, lpipss, degs;
  for (const auto& it : summary.items) {
    if (it.failed) continue;
    if (std::isfinite(it.metrics.psnr)) psnrs.push_back(it.metrics.psnr);
    ssims.push_back(it.metrics.ssim);
    if (it.metrics.lpips) lpipss.push_back(*it.metrics.lpips);
    if (std::isfinite(it.degradation_psnr)) degs.push_back(it.degradation_psnr);
    char key[64];
    std::snprintf(key, sizeof(key), "sigma=%g/alpha=%g", it.sigma, it.transparency);
    auto& grp = summary.by_condition[key];
    if (std::isfinite(it.metrics.psnr)) {
      grp.psnr += it.metrics.psnr;
      grp.ssim += it.metrics.ssim;
      ++grp.count;
    }
  }
  auto mean_std = [](const std::vector<double>& v, double& mean, double& stddev) {
    if (v.empty()) {
      mean = stddev = 0;
      return;
    }
    mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    stddev = 0;
    for (double x : v) stddev += (x - mean) * (x - mean);
    stddev = std::sqrt(stddev / static_cast<double>(v.size()));
  };
  mean_std(psnrs, summary.mean_psnr, summary.std_psnr);
  mean_std(ssims, summary.mean_ssim, summary.std_ssim);
  if (!lpipss.empty()) {
    double m, s;
    mean_std(lpipss, m, s);
    summary.mean_lpips = m;
  }
  double dm, ds;
  mean_std(degs, dm, ds);
  summary.mean_degradation_psnr = dm;
  for (auto& [k, g] : summary.by_condition)
    if (g.count) {
      g.psnr /= g.count;
      g.ssim /= g.count;
    }

  if (!opts.out_dir.empty()) {
    std::ofstream csv(fs::path(opts.out_dir) / "metrics.csv");
    csv << "id,sigma,alpha_w,psnr,ssim,lpips\n";
    for (const auto& it : summary.items) {
      if (it.failed) continue;
      csv << it.id << "," << it.sigma << "," << it.transparency << "," << it.metrics.psnr
          << "," << it.metrics.ssim << ",";
      if (it.metrics.lpips) csv << *it.metrics.lpips;
      csv << "\n";
    }
    json j;
    j["records"] = json::array();
    for (const auto& it : summary.items) {
      json r{{"id", it.id}, {"psnr", it.metrics.psnr}, {"ssim", it.metrics.ssim}};
      if (it.metrics.lpips) r["lpips"] = *it.metrics.lpips;
      if (it.failed) r["error"] = it.error;
      j["records"].push_back(r);
    }
    j["aggregate"] = {{"mean_psnr", summary.mean_psnr},
                      {"std_psnr", summary.std_psnr},
                      {"mean_ssim", summary.mean_ssim},
                      {"std_ssim", summary.std_ssim},
                      {"mean_degradation_psnr", summary.mean_degradation_psnr},
                      {"failures", summary.failures}};
    if (summary.mean_lpips) j["aggregate"]["mean_lpips"] = *summary.mean_lpips;
    for (const auto& [k, g] : summary.by_condition)
      j["by_condition"][k] = {{"psnr", g.psnr}, {"ssim", g.ssim}, {"count", g.count}};
    std::ofstream jf(fs::path(opts.out_dir) / "metrics.json");
    jf << j.dump(2) << "\n";
  }
  return summary;
}

}  // namespace sshnet
