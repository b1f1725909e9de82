#include "bigraph/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace bigraph {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  BG_THROW(ConfigError, "config: bad boolean for " << key << ": '" << v << "'");
}

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int64_t r = std::stoll(v, &pos);
    BG_CHECK_CFG(pos == v.size(), "config: bad integer for " << key << ": '" << v << "'");
    return r;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    BG_THROW(ConfigError, "config: bad integer for " << key << ": '" << v << "'");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    uint64_t r = std::stoull(v, &pos);
    BG_CHECK_CFG(pos == v.size(), "config: bad integer for " << key << ": '" << v << "'");
    return r;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    BG_THROW(ConfigError, "config: bad integer for " << key << ": '" << v << "'");
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double r = std::stod(v, &pos);
    BG_CHECK_CFG(pos == v.size(), "config: bad number for " << key << ": '" << v << "'");
    return r;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    BG_THROW(ConfigError, "config: bad number for " << key << ": '" << v << "'");
  }
}

std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::set_field(const std::string& key, const std::string& value) {
  if (key == "T") stages = parse_int(key, value);
  else if (key == "C") channels = parse_int(key, value);
  else if (key == "n_nodes") n_nodes = parse_int(key, value);
  else if (key == "n_nodes_b2a") n_nodes_b2a = parse_int(key, value);
  else if (key == "n_nodes_a2b") n_nodes_a2b = parse_int(key, value);
  else if (key == "d_state") d_state = parse_int(key, value);
  else if (key == "disc_width") disc_width = parse_int(key, value);
  else if (key == "disc_layers") disc_layers = parse_int(key, value);
  else if (key == "use_b2a") use_b2a = parse_bool(key, value);
  else if (key == "use_a2b") use_a2b = parse_bool(key, value);
  else if (key == "share_gcn") share_gcn = parse_bool(key, value);
  else if (key == "use_aif") use_aif = parse_bool(key, value);
  else if (key == "seed") seed = parse_u64(key, value);
  else if (key == "image_h") image_h = parse_int(key, value);
  else if (key == "image_w") image_w = parse_int(key, value);
  else if (key == "train_identities") train_identities = parse_int(key, value);
  else if (key == "test_identities") test_identities = parse_int(key, value);
  else if (key == "heatmap_radius") heatmap_radius = parse_int(key, value);
  else if (key == "batch_size") batch_size = parse_int(key, value);
  else if (key == "steps") steps = parse_int(key, value);
  else if (key == "lr") lr = parse_real(key, value);
  else if (key == "adam_beta1") adam_beta1 = parse_real(key, value);
  else if (key == "adam_beta2") adam_beta2 = parse_real(key, value);
  else if (key == "adam_eps") adam_eps = parse_real(key, value);
  else if (key == "lambda_gan") lambda_gan = parse_real(key, value);
  else if (key == "lambda_l1") lambda_l1 = parse_real(key, value);
  else if (key == "lambda_per") lambda_per = parse_real(key, value);
  else if (key == "extractor_seed") extractor_seed = parse_u64(key, value);
  else if (key == "disc_combine") disc_combine = value;
  else if (key == "checkpoint_every") checkpoint_every = parse_int(key, value);
  else if (key == "eval_every") eval_every = parse_int(key, value);
  else if (key == "eval_samples") eval_samples = parse_int(key, value);
  else BG_THROW(ConfigError, "config: unknown key '" << key << "'");
}

TrainConfig TrainConfig::from_string(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    BG_CHECK_CFG(eq != std::string::npos, "config: line " << lineno << " is not 'key = value'");
    cfg.set_field(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  BG_CHECK_CFG(in.good(), "config: cannot read " << path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

std::string TrainConfig::to_string() const {
  std::ostringstream o;
  o << "T = " << stages << "\n";
  o << "C = " << channels << "\n";
  o << "n_nodes = " << n_nodes << "\n";
  o << "n_nodes_b2a = " << n_nodes_b2a << "\n";
  o << "n_nodes_a2b = " << n_nodes_a2b << "\n";
  o << "d_state = " << d_state << "\n";
  o << "disc_width = " << disc_width << "\n";
  o << "disc_layers = " << disc_layers << "\n";
  o << "use_b2a = " << (use_b2a ? 1 : 0) << "\n";
  o << "use_a2b = " << (use_a2b ? 1 : 0) << "\n";
  o << "share_gcn = " << (share_gcn ? 1 : 0) << "\n";
  o << "use_aif = " << (use_aif ? 1 : 0) << "\n";
  o << "seed = " << seed << "\n";
  o << "image_h = " << image_h << "\n";
  o << "image_w = " << image_w << "\n";
  o << "train_identities = " << train_identities << "\n";
  o << "test_identities = " << test_identities << "\n";
  o << "heatmap_radius = " << heatmap_radius << "\n";
  o << "batch_size = " << batch_size << "\n";
  o << "steps = " << steps << "\n";
  o << "lr = " << fmt_real(lr) << "\n";
  o << "adam_beta1 = " << fmt_real(adam_beta1) << "\n";
  o << "adam_beta2 = " << fmt_real(adam_beta2) << "\n";
  o << "adam_eps = " << fmt_real(adam_eps) << "\n";
  o << "lambda_gan = " << fmt_real(lambda_gan) << "\n";
  o << "lambda_l1 = " << fmt_real(lambda_l1) << "\n";
  o << "lambda_per = " << fmt_real(lambda_per) << "\n";
  o << "extractor_seed = " << extractor_seed << "\n";
  o << "disc_combine = " << disc_combine << "\n";
  o << "checkpoint_every = " << checkpoint_every << "\n";
  o << "eval_every = " << eval_every << "\n";
  o << "eval_samples = " << eval_samples << "\n";
  return o.str();
}

void TrainConfig::save(const std::string& path) const {
  std::ofstream out(path);
  BG_CHECK_CFG(out.good(), "config: cannot write " << path);
  out << to_string();
  BG_CHECK_CFG(out.good(), "config: write to " << path << " failed");
}

std::string TrainConfig::hash() const {
  std::string s = to_string();
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void TrainConfig::validate() const {
  BG_CHECK_CFG(stages >= 1, "config: T must be >= 1, got " << stages);
  BG_CHECK_CFG(channels >= 4 && channels % 2 == 0,
               "config: C must be even and >= 4, got " << channels);
  BG_CHECK_CFG(n_nodes >= 1 && d_state >= 1, "config: n_nodes and d_state must be positive");
  BG_CHECK_CFG(n_nodes_b2a >= 0 && n_nodes_a2b >= 0, "config: node overrides must be >= 0");
  BG_CHECK_CFG(disc_width >= 1 && disc_layers >= 1, "config: discriminator dims must be positive");
  BG_CHECK_CFG(image_h >= 32 && image_w >= 16,
               "config: minimum image size is 32x16, got " << image_h << "x" << image_w);
  BG_CHECK_CFG(image_h % 4 == 0 && image_w % 4 == 0,
               "config: image size must be divisible by 4, got " << image_h << "x" << image_w);
  BG_CHECK_CFG(train_identities >= 1 && test_identities >= 1,
               "config: identity counts must be positive");
  BG_CHECK_CFG(heatmap_radius >= 1, "config: heatmap_radius must be >= 1");
  BG_CHECK_CFG(batch_size >= 1, "config: batch_size must be >= 1");
  BG_CHECK_CFG(steps >= 0, "config: steps must be >= 0");
  BG_CHECK_CFG(lr > 0, "config: lr must be positive");
  BG_CHECK_CFG(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1,
               "config: adam betas must lie in [0,1)");
  BG_CHECK_CFG(adam_eps > 0, "config: adam_eps must be positive");
  BG_CHECK_CFG(lambda_gan >= 0 && lambda_l1 >= 0 && lambda_per >= 0,
               "config: loss weights must be nonnegative");
  BG_CHECK_CFG(disc_combine == "avg" || disc_combine == "sum",
               "config: disc_combine must be 'avg' or 'sum', got '" << disc_combine << "'");
  BG_CHECK_CFG(checkpoint_every >= 0 && eval_every >= 0, "config: cadences must be >= 0");
  BG_CHECK_CFG(eval_samples >= 1, "config: eval_samples must be >= 1");
  if (share_gcn)
    BG_CHECK_CFG(nodes_b2a() == nodes_a2b(),
                 "config: share_gcn requires equal node counts per branch");
}

DatasetConfig TrainConfig::dataset_config() const {
  DatasetConfig d;
  d.seed = seed;
  d.n_train_identities = static_cast<int>(train_identities);
  d.n_test_identities = static_cast<int>(test_identities);
  d.height = static_cast<int>(image_h);
  d.width = static_cast<int>(image_w);
  d.heatmap_radius = static_cast<int>(heatmap_radius);
  return d;
}

GeneratorConfig TrainConfig::generator_config() const {
  GeneratorConfig g;
  g.stages = stages;
  g.channels = channels;
  g.n_nodes_b2a = nodes_b2a();
  g.n_nodes_a2b = nodes_a2b();
  g.d_state = d_state;
  g.use_b2a = use_b2a;
  g.use_a2b = use_a2b;
  g.share_gcn = share_gcn;
  g.use_aif = use_aif;
  return g;
}

DiscriminatorConfig TrainConfig::appearance_disc_config() const {
  DiscriminatorConfig d;
  d.in_channels = 6;
  d.base_width = disc_width;
  d.n_strided = static_cast<int>(disc_layers);
  return d;
}

DiscriminatorConfig TrainConfig::shape_disc_config() const {
  DiscriminatorConfig d;
  d.in_channels = kNumJoints + 3;
  d.base_width = disc_width;
  d.n_strided = static_cast<int>(disc_layers);
  return d;
}

}  // namespace bigraph
