#pragma once

#include <json.hpp>

#include "sshnet/config.hpp"
#include "sshnet/synth.hpp"
#include "sshnet/trainer.hpp"

namespace sshnet {

inline nlohmann::json to_json(const ModelConfig& m) {
  return nlohmann::json{{"base_width", m.base_width},
                        {"level_depths", m.level_depths},
                        {"st_heads", m.st_heads},
                        {"topk_rates", m.topk_rates},
                        {"ffn_expansion", m.ffn_expansion},
                        {"nrd_bottleneck_depth", m.nrd_bottleneck_depth},
                        {"variant", to_string(m.variant)},
                        {"pairing_mode", to_string(m.pairing_mode)},
                        {"literal_zero_prune", m.literal_zero_prune},
                        {"topk_select_input_columns", m.topk_select_input_columns}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  m.base_width = j.value("base_width", m.base_width);
  if (j.contains("level_depths")) m.level_depths = j.at("level_depths").get<std::array<int, 5>>();
  if (j.contains("st_heads")) m.st_heads = j.at("st_heads").get<std::array<int, 5>>();
  if (j.contains("topk_rates")) m.topk_rates = j.at("topk_rates").get<std::vector<double>>();
  m.ffn_expansion = j.value("ffn_expansion", m.ffn_expansion);
  m.nrd_bottleneck_depth = j.value("nrd_bottleneck_depth", m.nrd_bottleneck_depth);
  if (j.contains("variant")) m.variant = variant_from_string(j.at("variant").get<std::string>());
  if (j.contains("pairing_mode"))
    m.pairing_mode = pairing_mode_from_string(j.at("pairing_mode").get<std::string>());
  m.literal_zero_prune = j.value("literal_zero_prune", m.literal_zero_prune);
  m.topk_select_input_columns =
      j.value("topk_select_input_columns", m.topk_select_input_columns);
  return m;
}

inline nlohmann::json to_json(const synth::DrawRange& r) {
  if (r.uniform) return nlohmann::json{{"lo", r.lo}, {"hi", r.hi}};
  return nlohmann::json{{"choices", r.choices}};
}

inline synth::DrawRange draw_range_from_json(const nlohmann::json& j) {
  if (j.contains("choices"))
    return synth::DrawRange::discrete(j.at("choices").get<std::vector<double>>());
  return synth::DrawRange::range(j.at("lo").get<double>(), j.at("hi").get<double>());
}

inline nlohmann::json to_json(const synth::CorruptionRanges& r) {
  return nlohmann::json{{"transparency", to_json(r.transparency)},
                        {"noise_sigma", to_json(r.noise_sigma)},
                        {"scale_lo", r.scale_lo},
                        {"scale_hi", r.scale_hi},
                        {"coverage_max", r.coverage_max},
                        {"max_placement_retries", r.max_placement_retries}};
}

inline synth::CorruptionRanges ranges_from_json(const nlohmann::json& j) {
  synth::CorruptionRanges r;
  if (j.contains("transparency")) r.transparency = draw_range_from_json(j.at("transparency"));
  if (j.contains("noise_sigma")) r.noise_sigma = draw_range_from_json(j.at("noise_sigma"));
  r.scale_lo = j.value("scale_lo", r.scale_lo);
  r.scale_hi = j.value("scale_hi", r.scale_hi);
  r.coverage_max = j.value("coverage_max", r.coverage_max);
  r.max_placement_retries = j.value("max_placement_retries", r.max_placement_retries);
  return r;
}

inline nlohmann::json to_json(const TrainConfig& t) {
  return nlohmann::json{{"lr0", t.lr0},
                        {"decay_factor", t.decay_factor},
                        {"decay_every_epochs", t.decay_every_epochs},
                        {"epochs", t.epochs},
                        {"batch", t.batch},
                        {"beta1", t.beta1},
                        {"beta2", t.beta2},
                        {"adam_eps", t.adam_eps},
                        {"crop", t.crop},
                        {"alpha", t.alpha},
                        {"seed", t.seed},
                        {"max_steps", t.max_steps},
                        {"hflip", t.hflip},
                        {"per_epoch_resynth", t.per_epoch_resynth},
                        {"checkpoint_every_epochs", t.checkpoint_every_epochs},
                        {"extractor_path", t.extractor_path},
                        {"resynth_ranges", to_json(t.resynth_ranges)}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig t;
  t.lr0 = j.value("lr0", t.lr0);
  t.decay_factor = j.value("decay_factor", t.decay_factor);
  t.decay_every_epochs = j.value("decay_every_epochs", t.decay_every_epochs);
  t.epochs = j.value("epochs", t.epochs);
  t.batch = j.value("batch", t.batch);
  t.beta1 = j.value("beta1", t.beta1);
  t.beta2 = j.value("beta2", t.beta2);
  t.adam_eps = j.value("adam_eps", t.adam_eps);
  t.crop = j.value("crop", t.crop);
  t.alpha = j.value("alpha", t.alpha);
  t.seed = j.value("seed", t.seed);
  t.max_steps = j.value("max_steps", t.max_steps);
  t.hflip = j.value("hflip", t.hflip);
  t.per_epoch_resynth = j.value("per_epoch_resynth", t.per_epoch_resynth);
  t.checkpoint_every_epochs = j.value("checkpoint_every_epochs", t.checkpoint_every_epochs);
  t.extractor_path = j.value("extractor_path", t.extractor_path);
  if (j.contains("resynth_ranges")) t.resynth_ranges = ranges_from_json(j.at("resynth_ranges"));
  return t;
}

}  // namespace sshnet
