#include "slt/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "slt/binio.hpp"
#include "slt/error.hpp"
#include "slt/fusion.hpp"

namespace slt::config {

namespace {

std::string trim(const std::string& s) {
  const size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValues KeyValues::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return parse_text(os.str());
}

KeyValues KeyValues::parse_text(const std::string& text) {
  KeyValues kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(lineno) +
                            ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (key.empty()) {
      throw ValidationError("config line " + std::to_string(lineno) +
                            ": empty key");
    }
    if (!kv.values_.emplace(key, value).second) {
      throw ValidationError("duplicate config key: " + key);
    }
    kv.consumed_[key] = false;
  }
  return kv;
}

bool KeyValues::has(const std::string& key) const {
  return values_.count(key) > 0;
}

bool KeyValues::get_bool(const std::string& key, bool dflt) {
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  consumed_[key] = true;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ValidationError("config key '" + key + "': bad bool '" + it->second +
                        "'");
}

std::string KeyValues::get_string(const std::string& key,
                                  const std::string& dflt) {
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  consumed_[key] = true;
  return it->second;
}

int64_t KeyValues::get_int(const std::string& key, int64_t dflt) {
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  consumed_[key] = true;
  try {
    size_t used = 0;
    const int64_t v = std::stoll(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(it->second);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': bad integer '" +
                          it->second + "'");
  }
}

uint64_t KeyValues::get_u64(const std::string& key, uint64_t dflt) {
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  consumed_[key] = true;
  try {
    size_t used = 0;
    const uint64_t v = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(it->second);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': bad unsigned '" +
                          it->second + "'");
  }
}

double KeyValues::get_real(const std::string& key, double dflt) {
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  consumed_[key] = true;
  try {
    size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(it->second);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': bad real '" +
                          it->second + "'");
  }
}

void KeyValues::reject_unknown() const {
  for (const auto& [key, used] : consumed_) {
    if (!used) throw ValidationError("unknown config key: " + key);
  }
}

ModelProfile profile_from_string(const std::string& name) {
  if (name == "tiny") return ModelProfile{"tiny", 64, 2, 4};
  if (name == "default") return ModelProfile{"default", 512, 6, 8};
  throw ValidationError("unknown profile '" + name +
                        "' (expected tiny or default)");
}

RunConfig RunConfig::from_file(const std::string& path) {
  return from_kv(KeyValues::parse_file(path));
}

RunConfig RunConfig::from_kv(KeyValues kv) {
  RunConfig c;
  c.stage = kv.get_string("stage", c.stage);
  c.train_dir = kv.get_string("train_dir", c.train_dir);
  c.eval_dir = kv.get_string("eval_dir", c.eval_dir);
  c.profile = kv.get_string("profile", c.profile);
  c.lr_max = kv.get_real("lr_max", c.lr_max);
  c.lr_min = kv.get_real("lr_min", c.lr_min);
  c.fusion_lr_max = kv.get_real("fusion_lr_max", c.fusion_lr_max);
  c.fusion_lr_min = kv.get_real("fusion_lr_min", c.fusion_lr_min);
  c.warmup_steps = kv.get_int("warmup_steps", c.warmup_steps);
  c.batch_size = kv.get_int("batch_size", c.batch_size);
  c.clip_norm = kv.get_real("clip_norm", c.clip_norm);
  c.dropout = kv.get_real("dropout", c.dropout);
  c.weight_decay = kv.get_real("weight_decay", c.weight_decay);
  c.epochs_router = kv.get_int("epochs_router", c.epochs_router);
  c.epochs_sign = kv.get_int("epochs_sign", c.epochs_sign);
  c.epochs_fs = kv.get_int("epochs_fs", c.epochs_fs);
  c.epochs_lip = kv.get_int("epochs_lip", c.epochs_lip);
  c.epochs_fusion = kv.get_int("epochs_fusion", c.epochs_fusion);
  c.epoch_scale = kv.get_real("epoch_scale", c.epoch_scale);
  c.tau_start = kv.get_real("tau_start", c.tau_start);
  c.tau_end = kv.get_real("tau_end", c.tau_end);
  c.fusion_variant = kv.get_string("fusion_variant", c.fusion_variant);
  c.gate_mode = kv.get_string("gate_mode", c.gate_mode);
  c.shift = kv.get_string("shift", c.shift);
  c.seed = kv.get_u64("seed", c.seed);
  c.ablate_seeds = kv.get_int("ablate_seeds", c.ablate_seeds);
  c.ablate_train_episodes =
      kv.get_int("ablate_train_episodes", c.ablate_train_episodes);
  c.ablate_eval_episodes =
      kv.get_int("ablate_eval_episodes", c.ablate_eval_episodes);
  kv.reject_unknown();
  c.validate();
  return c;
}

void RunConfig::validate() const {
  if (stage != "experts" && stage != "fusion") {
    throw ValidationError("stage must be experts or fusion");
  }
  (void)profile_from_string(profile);
  (void)fusion::variant_from_string(fusion_variant);
  if (gate_mode != "adaptive" && gate_mode != "fixed_half") {
    throw ValidationError("gate_mode must be adaptive or fixed_half");
  }
  (void)fusion::ShiftSpec::parse(shift);
  if (lr_max <= 0 || lr_min < 0 || lr_min > lr_max) {
    throw ValidationError("need lr_max > 0 and 0 <= lr_min <= lr_max");
  }
  if (fusion_lr_max > 0 &&
      effective_fusion_lr_min() > effective_fusion_lr_max()) {
    throw ValidationError("fusion lr bounds out of order");
  }
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (dropout < 0 || dropout >= 1) throw ValidationError("bad dropout");
  if (epoch_scale <= 0) throw ValidationError("epoch_scale must be > 0");
  if (tau_start <= 0 || tau_end <= 0) {
    throw ValidationError("tau schedule values must be > 0");
  }
  for (int64_t e : {epochs_router, epochs_sign, epochs_fs, epochs_lip,
                    epochs_fusion}) {
    if (e < 1) throw ValidationError("epoch counts must be >= 1");
  }
  if (ablate_seeds < 1 || ablate_train_episodes < 1 ||
      ablate_eval_episodes < 1) {
    throw ValidationError("ablation sizes must be >= 1");
  }
}

std::string RunConfig::canonical_text() const {
  std::ostringstream os;
  os << "stage=" << stage << '\n'
     << "train_dir=" << train_dir << '\n'
     << "eval_dir=" << eval_dir << '\n'
     << "profile=" << profile << '\n'
     << "lr_max=" << lr_max << '\n'
     << "lr_min=" << lr_min << '\n'
     << "warmup_steps=" << warmup_steps << '\n'
     << "batch_size=" << batch_size << '\n'
     << "clip_norm=" << clip_norm << '\n'
     << "dropout=" << dropout << '\n'
     << "weight_decay=" << weight_decay << '\n'
     << "epochs_router=" << epochs_router << '\n'
     << "epochs_sign=" << epochs_sign << '\n'
     << "epochs_fs=" << epochs_fs << '\n'
     << "epochs_lip=" << epochs_lip << '\n'
     << "epochs_fusion=" << epochs_fusion << '\n'
     << "epoch_scale=" << epoch_scale << '\n'
     << "tau_start=" << tau_start << '\n'
     << "tau_end=" << tau_end << '\n'
     << "fusion_variant=" << fusion_variant << '\n'
     << "gate_mode=" << gate_mode << '\n'
     << "shift=" << shift << '\n'
     << "seed=" << seed << '\n'
     << "ablate_seeds=" << ablate_seeds << '\n'
     << "ablate_train_episodes=" << ablate_train_episodes << '\n'
     << "ablate_eval_episodes=" << ablate_eval_episodes << '\n';
  return os.str();
}

uint64_t RunConfig::hash() const { return binio::fnv1a(canonical_text()); }

int64_t RunConfig::scaled(int64_t epochs) const {
  return std::max<int64_t>(
      1, static_cast<int64_t>(std::llround(epochs * epoch_scale)));
}

synth::GenConfig gen_config_from_file(const std::string& path) {
  return gen_config_from_kv(KeyValues::parse_file(path));
}

synth::GenConfig gen_config_from_kv(KeyValues kv) {
  synth::GenConfig c;
  c.gloss_vocab_size = kv.get_int("gloss_vocab_size", c.gloss_vocab_size);
  c.d_feat = kv.get_int("d_feat", c.d_feat);
  c.glosses_per_episode_min =
      kv.get_int("glosses_per_episode_min", c.glosses_per_episode_min);
  c.glosses_per_episode_max =
      kv.get_int("glosses_per_episode_max", c.glosses_per_episode_max);
  c.letters_per_word_min =
      kv.get_int("letters_per_word_min", c.letters_per_word_min);
  c.letters_per_word_max =
      kv.get_int("letters_per_word_max", c.letters_per_word_max);
  c.frames_per_gloss_min =
      kv.get_int("frames_per_gloss_min", c.frames_per_gloss_min);
  c.frames_per_gloss_max =
      kv.get_int("frames_per_gloss_max", c.frames_per_gloss_max);
  c.frames_per_letter_min =
      kv.get_int("frames_per_letter_min", c.frames_per_letter_min);
  c.frames_per_letter_max =
      kv.get_int("frames_per_letter_max", c.frames_per_letter_max);
  c.rest_gap_min = kv.get_int("rest_gap_min", c.rest_gap_min);
  c.rest_gap_max = kv.get_int("rest_gap_max", c.rest_gap_max);
  c.lip_rate_ratio = kv.get_real("lip_rate_ratio", c.lip_rate_ratio);
  c.lip_offset_frames = kv.get_int("lip_offset_frames", c.lip_offset_frames);
  c.noise_sigma = kv.get_real("noise_sigma", c.noise_sigma);
  c.fingerspell_probability =
      kv.get_real("fingerspell_probability", c.fingerspell_probability);
  c.seed = kv.get_u64("seed", c.seed);
  c.n_episodes = kv.get_int("n_episodes", c.n_episodes);
  c.episode_offset = kv.get_int("episode_offset", c.episode_offset);
  c.letter_pair_confusion =
      kv.get_bool("letter_pair_confusion", c.letter_pair_confusion);
  c.mouth_fingerspelling =
      kv.get_bool("mouth_fingerspelling", c.mouth_fingerspelling);
  kv.reject_unknown();
  c.validate();
  return c;
}

}  // namespace slt::config
