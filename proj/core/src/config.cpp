#include "cfmg/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>

#include "cfmg/errors.hpp"

namespace cfmg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    throw UsageError("invalid value for " + key + ": '" + value + "'");
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field number_field(T RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_number<T>(k, v);
          },
          [member](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(c.*member);
            } else {
              return std::to_string(c.*member);
            }
          }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"seed", number_field(&RunConfig::seed)},
      {"pairs_per_object", number_field(&RunConfig::pairs_per_object)},
      {"corpus_size", number_field(&RunConfig::corpus_size)},
      {"image_size", number_field(&RunConfig::image_size)},
      {"ae_epochs", number_field(&RunConfig::ae_epochs)},
      {"ae_batch_size", number_field(&RunConfig::ae_batch_size)},
      {"ae_lr", number_field(&RunConfig::ae_lr)},
      {"cfm_epochs", number_field(&RunConfig::cfm_epochs)},
      {"cfm_batch_size", number_field(&RunConfig::cfm_batch_size)},
      {"cfm_lr", number_field(&RunConfig::cfm_lr)},
      {"adam_beta1", number_field(&RunConfig::adam_beta1)},
      {"adam_beta2", number_field(&RunConfig::adam_beta2)},
      {"adam_eps", number_field(&RunConfig::adam_eps)},
      {"split_fraction", number_field(&RunConfig::split_fraction)},
      {"output_activation",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          try {
            c.output_activation = nn::activation_from_string(v);
          } catch (const std::invalid_argument&) {
            throw UsageError("invalid value for " + k + ": '" + v + "'");
          }
        },
        [](const RunConfig& c) { return nn::to_string(c.output_activation); }}},
      {"bn_momentum", number_field(&RunConfig::bn_momentum)},
      {"bn_epsilon", number_field(&RunConfig::bn_epsilon)},
      {"ode_method",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          try {
            c.ode_method = ode_method_from_string(v);
          } catch (const std::invalid_argument&) {
            throw UsageError("invalid value for " + k + ": '" + v + "'");
          }
        },
        [](const RunConfig& c) { return to_string(c.ode_method); }}},
      {"rtol", number_field(&RunConfig::rtol)},
      {"atol", number_field(&RunConfig::atol)},
      {"initial_step", number_field(&RunConfig::initial_step)},
      {"max_steps", number_field(&RunConfig::max_steps)},
      {"min_step", number_field(&RunConfig::min_step)},
      {"eval_trials_seen", number_field(&RunConfig::eval_trials_seen)},
      {"eval_trials_unseen", number_field(&RunConfig::eval_trials_unseen)},
      {"max_tilt_deg", number_field(&RunConfig::max_tilt_deg)},
      {"max_offset_fraction", number_field(&RunConfig::max_offset_fraction)},
      {"min_depth", number_field(&RunConfig::min_depth)},
      {"sphere_band", number_field(&RunConfig::sphere_band)},
      {"export_count", number_field(&RunConfig::export_count)},
  };
  return table;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "out") {
    out = value;
    return;
  }
  if (key == "data") {
    data = value;
    return;
  }
  const auto it = fields().find(key);
  if (it == fields().end()) throw UsageError("unknown config key: " + key);
  it->second.set(*this, key, value);
}

void RunConfig::apply_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  apply_text(buf.str());
}

std::string RunConfig::to_text() const {
  std::string out_text;
  for (const auto& [key, field] : fields()) {
    out_text += key + "=" + field.get(*this) + "\n";
  }
  return out_text;
}

void RunConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw UsageError(msg);
  };
  require(pairs_per_object >= 1, "pairs_per_object must be >= 1");
  require(corpus_size >= 1, "corpus_size must be >= 1");
  require(image_size >= 4, "image_size must be >= 4");
  require(ae_epochs >= 1 && ae_batch_size >= 1 && ae_lr > 0.0, "invalid autoencoder settings");
  require(cfm_epochs >= 1, "cfm_epochs must be >= 1");
  require(cfm_batch_size >= 2, "cfm_batch_size must be >= 2");
  require(cfm_lr > 0.0, "cfm_lr must be positive");
  require(split_fraction > 0.0 && split_fraction < 1.0, "split_fraction must lie in (0, 1)");
  require(output_activation != nn::Activation::Silu,
          "output_activation must be identity or relu");
  require(bn_epsilon > 0.0 && bn_momentum > 0.0 && bn_momentum <= 1.0, "invalid batch norm");
  require(rtol > 0.0 && atol > 0.0, "rtol and atol must be positive");
  require(initial_step > 0.0 && min_step > 0.0 && max_steps >= 1, "invalid integrator steps");
  require(eval_trials_seen >= 0 && eval_trials_unseen >= 0, "trial counts must be >= 0");
  require(max_tilt_deg > 0.0 && max_offset_fraction > 0.0 && min_depth > 0.0 &&
              sphere_band > 0.0,
          "success thresholds must be positive");
  require(export_count >= 1, "export_count must be >= 1");
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = cfm_epochs;
  t.batch_size = cfm_batch_size;
  t.lr = cfm_lr;
  t.beta1 = adam_beta1;
  t.beta2 = adam_beta2;
  t.adam_eps = adam_eps;
  t.seed = seed;
  t.split_fraction = split_fraction;
  t.output_activation = output_activation;
  return t;
}

AutoencoderTrainConfig RunConfig::autoencoder_config() const {
  return {ae_epochs, ae_batch_size, ae_lr, seed};
}

IntegratorConfig RunConfig::integrator_config() const {
  return {ode_method, rtol, atol, initial_step, max_steps, min_step};
}

SuccessCriteria RunConfig::success_criteria() const {
  SuccessCriteria c;
  c.max_tilt = max_tilt_deg * std::numbers::pi / 180.0;
  c.max_offset_fraction = max_offset_fraction;
  c.min_depth = min_depth;
  c.sphere_band = sphere_band;
  return c;
}

GenerateOptions RunConfig::generate_options() const {
  return {pairs_per_object, corpus_size, image_size, image_size};
}

}  // namespace cfmg
