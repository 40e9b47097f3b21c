#include "scg/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "scg/binary_io.hpp"
#include "scg/error.hpp"

namespace scg {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view v, const std::string& key) {
  T out{};
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size()) {
    throw ConfigError("value '" + std::string(v) + "' for " + key + " is not a valid number");
  }
  return out;
}

bool parse_bool(std::string_view v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("value '" + std::string(v) + "' for " + key + " must be true or false");
}

std::vector<int> parse_levels(std::string_view v, const std::string& key) {
  std::vector<int> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(parse_number<int>(trim(v.substr(0, comma)), key));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct Field {
  std::function<void(TrainConfig&, std::string_view, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
Field number_field(T TrainConfig::*member) {
  return {[member](TrainConfig& c, std::string_view v, const std::string& k) { c.*member = parse_number<T>(v, k); },
          [member](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return format_double(c.*member);
            else return std::to_string(c.*member);
          }};
}

template <typename S, typename T>
Field nested_field(S TrainConfig::*outer, T S::*inner) {
  return {[outer, inner](TrainConfig& c, std::string_view v, const std::string& k) {
            c.*outer.*inner = parse_number<T>(v, k);
          },
          [outer, inner](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return format_double(c.*outer.*inner);
            else return std::to_string(c.*outer.*inner);
          }};
}

// Ordered as written by serialize_train_config.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> f{
      {"epochs", number_field(&TrainConfig::epochs)},
      {"decay_start_epoch", number_field(&TrainConfig::decay_start_epoch)},
      {"batch_size", number_field(&TrainConfig::batch_size)},
      {"lr_g", number_field(&TrainConfig::lr_g)},
      {"lr_d", number_field(&TrainConfig::lr_d)},
      {"beta1", number_field(&TrainConfig::beta1)},
      {"beta2", number_field(&TrainConfig::beta2)},
      {"lambda_p", nested_field(&TrainConfig::weights, &LossWeights::lambda_p)},
      {"lambda_sty", nested_field(&TrainConfig::weights, &LossWeights::lambda_sty)},
      {"lambda_cyc", nested_field(&TrainConfig::weights, &LossWeights::lambda_cyc)},
      {"lambda_adv", nested_field(&TrainConfig::weights, &LossWeights::lambda_adv)},
      {"noise_sigma", number_field(&TrainConfig::noise_pixels)},
      {"k", number_field(&TrainConfig::k)},
      {"n", number_field(&TrainConfig::candidates)},
      {"loss_levels",
       {[](TrainConfig& c, std::string_view v, const std::string& k) { c.loss_levels = parse_levels(v, k); },
        [](const TrainConfig& c) {
          std::string s;
          for (std::size_t i = 0; i < c.loss_levels.size(); ++i) s += (i ? "," : "") + std::to_string(c.loss_levels[i]);
          return s;
        }}},
      {"seed", number_field(&TrainConfig::seed)},
      {"extractor_seed", number_field(&TrainConfig::extractor_seed)},
      {"checkpoint_interval", number_field(&TrainConfig::checkpoint_interval)},
      {"image_size", number_field(&TrainConfig::image_size)},
      {"steps_per_epoch", number_field(&TrainConfig::steps_per_epoch)},
      {"generator_width", nested_field(&TrainConfig::generator, &GeneratorSpec::width)},
      {"generator_blocks", nested_field(&TrainConfig::generator, &GeneratorSpec::residual_blocks)},
      {"generator_downsample", nested_field(&TrainConfig::generator, &GeneratorSpec::downsample_stages)},
      {"discriminator_width", nested_field(&TrainConfig::discriminator, &DiscriminatorSpec::width)},
      {"discriminator_layers", nested_field(&TrainConfig::discriminator, &DiscriminatorSpec::layers)},
      {"float32_storage",
       {[](TrainConfig& c, std::string_view v, const std::string& k) { c.float32_storage = parse_bool(v, k); },
        [](const TrainConfig& c) { return std::string(c.float32_storage ? "true" : "false"); }}},
  };
  return f;
}

}  // namespace

TrainConfig parse_train_config(std::string_view text) {
  std::map<std::string, const Field*> by_name;
  for (const auto& [name, field] : fields()) by_name[name] = &field;
  TrainConfig c;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    const std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    auto it = by_name.find(key);
    if (it == by_name.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    if (value.empty()) throw ConfigError(where + "missing value for '" + key + "'");
    try {
      it->second->set(c, value, key);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) { return parse_train_config(read_file(path)); }

std::string serialize_train_config(const TrainConfig& config) {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(config) + "\n";
  return out;
}

}  // namespace scg
