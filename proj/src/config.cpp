#include "pren/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace pren {

namespace {

const std::map<std::string, std::string>& default_values() {
  static const std::map<std::string, std::string> defaults = {
      {"seed", "1"},

      // preprocessing
      {"cube_size_mm", "150"},
      {"patch_size", "96"},
      {"center_near_mm", "150"},
      {"center_far_mm", "1200"},

      // backbone
      {"channels", "16,16,32,32,64,64"},
      {"kernel_size", "3"},

      // initializer network
      {"fc_dim", "2048"},

      // refinement network
      {"region_w", "7"},
      {"region_h", "7"},
      {"fc_region_dim", "2048"},
      {"fc_finger_dim", "2048"},
      {"dropout_rate", "0.5"},
      {"flat_ensemble", "0"},
      {"fc_flat1", "2304"},
      {"fc_flat2", "2048"},
      {"grid_regions", "0"},

      // training
      {"train_stages", "2"},
      {"infer_iterations", "3"},
      {"epochs_per_stage", "100"},
      {"batch_size", "128"},
      {"learning_rate", "0.001"},
      {"lr_decay_epochs", "25"},
      {"lr_decay_factor", "0.1"},
      {"momentum", "0.9"},
      {"weight_decay", "0.0005"},
      {"loss_beta", "0.01"},
      {"augment", "1"},
      {"aug_scale_min", "0.9"},
      {"aug_scale_max", "1.1"},
      {"aug_translate_px", "10"},
      {"aug_rotate_deg", "180"},

      // synthetic generation
      {"count", "100"},
      {"depth_noise_sigma", "0"},
      {"cam_fx", "140"},
      {"cam_fy", "140"},
      {"cam_cx", "80"},
      {"cam_cy", "60"},
  };
  return defaults;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig::RunConfig() : values_(default_values()) {}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return from_text(buf.str());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!default_values().count(key))
    throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end())
    throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  const std::string& v = get(key);
  std::size_t pos = 0;
  std::int64_t out;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
  }
  if (pos != v.size())
    throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
  return out;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string& v = get(key);
  std::size_t pos = 0;
  std::uint64_t out;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + v +
                      "' is not an unsigned integer");
  }
  if (pos != v.size())
    throw ConfigError("config key '" + key + "': '" + v +
                      "' is not an unsigned integer");
  return out;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = get(key);
  std::size_t pos = 0;
  double out;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
  }
  if (pos != v.size())
    throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
  return out;
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::string RunConfig::echo() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
  return os.str();
}

std::uint64_t RunConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : echo()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

BackboneConfig RunConfig::backbone() const {
  BackboneConfig cfg;
  const std::string& spec = get("channels");
  std::istringstream is(spec);
  std::string tok;
  std::size_t i = 0;
  while (std::getline(is, tok, ',')) {
    if (i >= cfg.conv_channels.size())
      throw ConfigError("config key 'channels' needs exactly 6 entries");
    try {
      cfg.conv_channels[i++] = std::stoi(tok);
    } catch (const std::exception&) {
      throw ConfigError("config key 'channels': '" + tok +
                        "' is not an integer");
    }
  }
  if (i != cfg.conv_channels.size())
    throw ConfigError("config key 'channels' needs exactly 6 entries");
  cfg.kernel_size = static_cast<int>(get_int("kernel_size"));
  cfg.input_size = static_cast<int>(get_int("patch_size"));
  return cfg;
}

InitCnnConfig RunConfig::init_cnn() const {
  InitCnnConfig cfg;
  cfg.backbone = backbone();
  cfg.fc_dim = static_cast<int>(get_int("fc_dim"));
  cfg.joint_count = 21;
  cfg.dropout_rate = get_double("dropout_rate");
  return cfg;
}

PoseRenConfig RunConfig::pose_ren() const {
  PoseRenConfig cfg;
  cfg.backbone = backbone();
  cfg.schema = GuideSchema::default21();
  cfg.region_w = static_cast<int>(get_int("region_w"));
  cfg.region_h = static_cast<int>(get_int("region_h"));
  cfg.fc_region_dim = static_cast<int>(get_int("fc_region_dim"));
  cfg.fc_finger_dim = static_cast<int>(get_int("fc_finger_dim"));
  cfg.dropout_rate = get_double("dropout_rate");
  cfg.flat_ensemble = get_bool("flat_ensemble");
  cfg.fc_flat1 = static_cast<int>(get_int("fc_flat1"));
  cfg.fc_flat2 = static_cast<int>(get_int("fc_flat2"));
  cfg.grid_regions = get_bool("grid_regions");
  return cfg;
}

CascadeConfig RunConfig::cascade() const {
  CascadeConfig cfg;
  cfg.train_stages = static_cast<int>(get_int("train_stages"));
  cfg.infer_iterations = static_cast<int>(get_int("infer_iterations"));
  cfg.epochs_per_stage = static_cast<int>(get_int("epochs_per_stage"));
  cfg.batch_size = static_cast<int>(get_int("batch_size"));
  cfg.learning_rate = get_double("learning_rate");
  cfg.lr_decay_epochs = static_cast<int>(get_int("lr_decay_epochs"));
  cfg.lr_decay_factor = get_double("lr_decay_factor");
  cfg.momentum = get_double("momentum");
  cfg.weight_decay = get_double("weight_decay");
  cfg.loss_beta = get_double("loss_beta");
  cfg.cube_size_mm = get_double("cube_size_mm");
  cfg.center_near_mm = get_double("center_near_mm");
  cfg.center_far_mm = get_double("center_far_mm");
  cfg.augment = get_bool("augment");
  cfg.aug_ranges.scale_min = get_double("aug_scale_min");
  cfg.aug_ranges.scale_max = get_double("aug_scale_max");
  cfg.aug_ranges.translate_px = get_double("aug_translate_px");
  cfg.aug_ranges.rotate_deg = get_double("aug_rotate_deg");
  cfg.seed = get_u64("seed");
  return cfg;
}

SyntheticHandSpec RunConfig::hand_spec() const {
  SyntheticHandSpec spec;
  spec.depth_noise_sigma = get_double("depth_noise_sigma");
  return spec;
}

CameraIntrinsics RunConfig::camera() const {
  return {get_double("cam_fx"), get_double("cam_fy"), get_double("cam_cx"),
          get_double("cam_cy")};
}

}  // namespace pren
