#include "pfpn/run_config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace pfpn {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  KeyValueConfig kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                        ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                        ": empty key");
    }
    kv.entries_[key] = {value, path.string() + ":" + std::to_string(lineno),
                        false};
  }
  return kv;
}

void KeyValueConfig::set_override(const std::string& key,
                                  const std::string& value) {
  entries_[key] = {value, "command line", false};
}

KeyValueConfig::Entry* KeyValueConfig::find(const std::string& key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  it->second.consumed = true;
  return &it->second;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& def) {
  Entry* e = find(key);
  return e ? e->value : def;
}

int KeyValueConfig::get_int(const std::string& key, int def) {
  Entry* e = find(key);
  if (!e) return def;
  try {
    std::size_t used = 0;
    const int v = std::stoi(e->value, &used);
    if (used != e->value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(e->where + ": '" + key + "' expects an integer, got '" +
                      e->value + "'");
  }
}

std::uint64_t KeyValueConfig::get_uint64(const std::string& key,
                                         std::uint64_t def) {
  Entry* e = find(key);
  if (!e) return def;
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(e->value, &used);
    if (used != e->value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(e->where + ": '" + key +
                      "' expects an unsigned integer, got '" + e->value + "'");
  }
}

double KeyValueConfig::get_double(const std::string& key, double def) {
  Entry* e = find(key);
  if (!e) return def;
  try {
    std::size_t used = 0;
    const double v = std::stod(e->value, &used);
    if (used != e->value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(e->where + ": '" + key + "' expects a number, got '" +
                      e->value + "'");
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool def) {
  Entry* e = find(key);
  if (!e) return def;
  std::string v = e->value;
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(e->where + ": '" + key + "' expects a boolean, got '" +
                    e->value + "'");
}

std::vector<int> KeyValueConfig::get_int_list(const std::string& key,
                                              const std::vector<int>& def) {
  Entry* e = find(key);
  if (!e) return def;
  std::vector<int> out;
  for (const auto& item : split_list(e->value)) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError(e->where + ": '" + key +
                        "' expects a comma-separated integer list, got '" +
                        e->value + "'");
    }
  }
  return out;
}

std::vector<std::string> KeyValueConfig::get_string_list(
    const std::string& key, const std::vector<std::string>& def) {
  Entry* e = find(key);
  if (!e) return def;
  return split_list(e->value);
}

void KeyValueConfig::reject_unknown_keys() const {
  for (const auto& [key, entry] : entries_) {
    if (!entry.consumed) {
      throw ConfigError(entry.where + ": unknown configuration key '" + key +
                        "'");
    }
  }
}

RunConfig RunConfig::desk_defaults() {
  RunConfig rc;
  rc.train.model.num_levels = 5;
  rc.train.model.num_fpms = 2;
  rc.train.model.tm1_channels = 32;
  rc.train.model.tm2_channels = 16;
  rc.train.model.fm_channels = 16;
  rc.train.model.input_size = 80;
  rc.train.model.backbone = BackboneSpec::tiny(5);
  rc.train.aug_resize = 96;
  rc.train.max_iterations = 600;
  rc.train.batch_size = 8;
  return rc;
}

RunConfig RunConfig::load(
    const std::optional<std::filesystem::path>& config_path,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
  KeyValueConfig kv;
  if (config_path) kv = KeyValueConfig::from_file(*config_path);
  for (const auto& [k, v] : overrides) kv.set_override(k, v);

  RunConfig rc = desk_defaults();
  const char* env_out = std::getenv("PFPN_OUT_DIR");
  if (env_out && *env_out) rc.out_dir = env_out;
  rc.out_dir = kv.get_string("out_dir", rc.out_dir.string());

  ModelConfig& m = rc.train.model;
  m.num_levels = kv.get_int("model.num_levels", m.num_levels);
  m.num_fpms = kv.get_int("model.num_fpms", m.num_fpms);
  m.tm1_channels = kv.get_int("model.tm1_channels", m.tm1_channels);
  m.tm2_channels = kv.get_int("model.tm2_channels", m.tm2_channels);
  m.fm_channels = kv.get_int("model.fm_channels", m.fm_channels);
  m.input_size = kv.get_int("model.input_size", m.input_size);
  m.share_fpm_weights =
      kv.get_bool("model.share_fpm_weights", m.share_fpm_weights);
  m.backbone_id =
      backbone_id_from_string(kv.get_string("model.backbone", "tiny"));
  m.backbone = BackboneSpec::tiny(m.num_levels);
  m.backbone.channels =
      kv.get_int_list("model.backbone_channels", m.backbone.channels);
  m.backbone.strides =
      kv.get_int_list("model.backbone_strides", m.backbone.strides);
  auto read_triple = [&kv](const std::string& key, std::array<double, 3>& dst) {
    const std::string raw = kv.get_string(key, "");
    if (raw.empty()) return;
    const auto items = split_list(raw);
    if (items.size() != 3) throw ConfigError(key + " expects 3 values");
    for (int i = 0; i < 3; ++i) {
      try {
        dst[i] = std::stod(items[i]);
      } catch (const std::exception&) {
        throw ConfigError(key + " expects numbers, got '" + items[i] + "'");
      }
    }
  };
  read_triple("model.norm_mean", m.norm_mean);
  read_triple("model.norm_std", m.norm_std);

  TrainConfig& t = rc.train;
  t.learning_rate = kv.get_double("train.learning_rate", t.learning_rate);
  t.max_iterations = kv.get_int("train.max_iterations", t.max_iterations);
  t.batch_size = kv.get_int("train.batch_size", t.batch_size);
  t.seed = kv.get_uint64("train.seed", t.seed);
  t.checkpoint_every = kv.get_int("train.checkpoint_every", t.checkpoint_every);
  t.log_every = kv.get_int("train.log_every", t.log_every);
  t.aug_resize = kv.get_int("train.aug_resize", t.aug_resize);
  t.freeze_backbone_norm =
      kv.get_bool("train.freeze_backbone_norm", t.freeze_backbone_norm);
  t.test_samples = kv.get_int("train.test_samples", t.test_samples);

  SyntheticSpec& d = t.data;
  t.dataset_path = kv.get_string("data.path", t.dataset_path);
  d.num_samples = kv.get_int("data.num_samples", d.num_samples);
  d.canvas_size = kv.get_int("data.canvas_size", d.canvas_size);
  d.clutter_level = kv.get_double("data.clutter", d.clutter_level);
  d.seed = kv.get_uint64("data.seed", d.seed);
  const auto shape_names = kv.get_string_list(
      "data.shapes", {"ellipse", "rectangle", "blob"});
  std::set<ShapeKind> shapes;
  for (const auto& name : shape_names) {
    shapes.insert(shape_kind_from_string(name));
  }
  d.shapes = shapes;

  rc.ablate_t = kv.get_int_list("ablate.t_values", rc.ablate_t);
  rc.ablate_shared = kv.get_bool("ablate.shared", rc.ablate_shared);

  kv.reject_unknown_keys();
  rc.train.validate();
  return rc;
}

std::string describe_run_config(const RunConfig& rc) {
  std::ostringstream os;
  const ModelConfig& m = rc.train.model;
  const TrainConfig& t = rc.train;
  os << "out_dir = " << rc.out_dir.string() << "\n";
  os << "model.num_levels = " << m.num_levels << "\n";
  os << "model.num_fpms = " << m.num_fpms << "\n";
  os << "model.tm1_channels = " << m.tm1_channels << "\n";
  os << "model.tm2_channels = " << m.tm2_channels << "\n";
  os << "model.fm_channels = " << m.fm_channels << "\n";
  os << "model.input_size = " << m.input_size << "\n";
  os << "model.share_fpm_weights = " << (m.share_fpm_weights ? "true" : "false")
     << "\n";
  os << "model.backbone = " << to_string(m.backbone_id) << "\n";
  os << "model.backbone_channels = ";
  for (std::size_t i = 0; i < m.backbone.channels.size(); ++i) {
    os << (i ? "," : "") << m.backbone.channels[i];
  }
  os << "\nmodel.backbone_strides = ";
  for (std::size_t i = 0; i < m.backbone.strides.size(); ++i) {
    os << (i ? "," : "") << m.backbone.strides[i];
  }
  os << "\nmodel.norm_mean = " << m.norm_mean[0] << "," << m.norm_mean[1] << ","
     << m.norm_mean[2] << "\n";
  os << "model.norm_std = " << m.norm_std[0] << "," << m.norm_std[1] << ","
     << m.norm_std[2] << "\n";
  os << "train.learning_rate = " << t.learning_rate << "\n";
  os << "train.max_iterations = " << t.max_iterations << "\n";
  os << "train.batch_size = " << t.batch_size << "\n";
  os << "train.seed = " << t.seed << "\n";
  os << "train.checkpoint_every = " << t.checkpoint_every << "\n";
  os << "train.log_every = " << t.log_every << "\n";
  os << "train.aug_resize = " << t.aug_resize << "\n";
  os << "train.freeze_backbone_norm = "
     << (t.freeze_backbone_norm ? "true" : "false") << "\n";
  os << "train.test_samples = " << t.test_samples << "\n";
  os << "data.path = " << t.dataset_path << "\n";
  os << "data.num_samples = " << t.data.num_samples << "\n";
  os << "data.canvas_size = " << t.data.canvas_size << "\n";
  os << "data.clutter = " << t.data.clutter_level << "\n";
  os << "data.seed = " << t.data.seed << "\n";
  os << "data.shapes = ";
  bool first = true;
  for (const auto& s : t.data.shapes) {
    os << (first ? "" : ",") << to_string(s);
    first = false;
  }
  os << "\nablate.t_values = ";
  for (std::size_t i = 0; i < rc.ablate_t.size(); ++i) {
    os << (i ? "," : "") << rc.ablate_t[i];
  }
  os << "\nablate.shared = " << (rc.ablate_shared ? "true" : "false") << "\n";
  return os.str();
}

}  // namespace pfpn
