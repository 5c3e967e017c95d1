#include "jigsaw/network.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace jigsaw {

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::relu: return "relu";
    case LayerKind::linear: return "linear";
    case LayerKind::flatten: return "flatten";
    case LayerKind::concat: return "concat";
  }
  return "?";
}

LayerKind parse_layer_kind(const std::string& s) {
  for (auto k : {LayerKind::conv, LayerKind::maxpool, LayerKind::relu, LayerKind::linear, LayerKind::flatten,
                 LayerKind::concat})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown layer kind '" + s + "'");
}

LayerSpec LayerSpec::conv(std::string name, Index out_channels, Index kernel, Index stride, Index padding,
                          Index groups) {
  LayerSpec s;
  s.kind = LayerKind::conv;
  s.name = std::move(name);
  s.out_channels = out_channels;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  s.groups = groups;
  return s;
}

LayerSpec LayerSpec::maxpool(std::string name, Index window, Index stride, Index padding) {
  LayerSpec s;
  s.kind = LayerKind::maxpool;
  s.name = std::move(name);
  s.kernel = window;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::relu(std::string name) {
  LayerSpec s;
  s.kind = LayerKind::relu;
  s.name = std::move(name);
  return s;
}

LayerSpec LayerSpec::linear(std::string name, Index out_features) {
  LayerSpec s;
  s.kind = LayerKind::linear;
  s.name = std::move(name);
  s.out_features = out_features;
  return s;
}

LayerSpec LayerSpec::flatten(std::string name) {
  LayerSpec s;
  s.kind = LayerKind::flatten;
  s.name = std::move(name);
  return s;
}

LayerSpec LayerSpec::concat(std::string name, Index branches) {
  LayerSpec s;
  s.kind = LayerKind::concat;
  s.name = std::move(name);
  s.branches = branches;
  return s;
}

std::string LayerSpec::to_string() const {
  std::ostringstream os;
  os << jigsaw::to_string(kind) << " name=" << name;
  switch (kind) {
    case LayerKind::conv:
      os << " out=" << out_channels << " k=" << kernel << " stride=" << stride << " pad=" << padding
         << " groups=" << groups;
      break;
    case LayerKind::maxpool:
      os << " k=" << kernel << " stride=" << stride << " pad=" << padding;
      break;
    case LayerKind::linear:
      os << " out=" << out_features;
      break;
    case LayerKind::concat:
      os << " branches=" << branches;
      break;
    default:
      break;
  }
  return os.str();
}

LayerSpec LayerSpec::parse(const std::string& text) {
  std::istringstream is(text);
  std::string kind;
  if (!(is >> kind)) throw ConfigError("empty layer description");
  std::map<std::string, std::string> kv;
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ConfigError("layer field '" + tok + "' is not key=value");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  auto take_int = [&](const std::string& key, Index fallback) -> Index {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    std::size_t used = 0;
    Index v = 0;
    try {
      v = std::stoll(it->second, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != it->second.size()) throw ConfigError("layer field " + key + " is not an integer");
    kv.erase(it);
    return v;
  };
  LayerSpec s;
  s.kind = parse_layer_kind(kind);
  if (auto it = kv.find("name"); it != kv.end()) {
    s.name = it->second;
    kv.erase(it);
  }
  switch (s.kind) {
    case LayerKind::conv:
      s.out_channels = take_int("out", 0);
      s.kernel = take_int("k", 0);
      s.stride = take_int("stride", 1);
      s.padding = take_int("pad", 0);
      s.groups = take_int("groups", 1);
      break;
    case LayerKind::maxpool:
      s.kernel = take_int("k", 0);
      s.stride = take_int("stride", 1);
      s.padding = take_int("pad", 0);
      break;
    case LayerKind::linear:
      s.out_features = take_int("out", 0);
      break;
    case LayerKind::concat:
      s.branches = take_int("branches", 0);
      break;
    default:
      break;
  }
  if (!kv.empty()) throw ConfigError("unknown layer field '" + kv.begin()->first + "' for " + kind);
  return s;
}

Shape infer_output_shape(const LayerSpec& s, const Shape& in) {
  auto fail = [&](const std::string& why) {
    throw ConfigError("layer '" + s.name + "' (" + to_string(s.kind) + ") on input " + shape_string(in) + ": " + why);
  };
  switch (s.kind) {
    case LayerKind::conv: {
      if (in.size() != 3) fail("expects [C,H,W]");
      if (s.out_channels < 1 || s.kernel < 1 || s.stride < 1 || s.padding < 0 || s.groups < 1)
        fail("bad hyperparameters");
      if (in[0] % s.groups || s.out_channels % s.groups) fail("channels not divisible by groups");
      if (in[1] + 2 * s.padding < s.kernel || in[2] + 2 * s.padding < s.kernel) fail("input smaller than kernel");
      return {s.out_channels, conv_out_size(in[1], s.kernel, s.stride, s.padding),
              conv_out_size(in[2], s.kernel, s.stride, s.padding)};
    }
    case LayerKind::maxpool: {
      if (in.size() != 3) fail("expects [C,H,W]");
      if (s.kernel < 1 || s.stride < 1 || s.padding < 0 || s.padding >= s.kernel) fail("bad hyperparameters");
      if (in[1] + 2 * s.padding < s.kernel || in[2] + 2 * s.padding < s.kernel) fail("input smaller than window");
      return {in[0], conv_out_size(in[1], s.kernel, s.stride, s.padding),
              conv_out_size(in[2], s.kernel, s.stride, s.padding)};
    }
    case LayerKind::relu:
      return in;
    case LayerKind::linear:
      if (in.size() != 1) fail("expects a flat [D] input");
      if (s.out_features < 1) fail("output width must be positive");
      return {s.out_features};
    case LayerKind::flatten:
      return {shape_size(in)};
    case LayerKind::concat:
      if (in.size() != 1) fail("expects a flat [D] input");
      if (s.branches < 1) fail("branch count must be positive");
      return {in[0] * s.branches};
  }
  fail("unknown kind");
  return {};
}

Shape weight_shape(const LayerSpec& s, const Shape& in) {
  if (s.kind == LayerKind::conv) return {s.out_channels, in.at(0) / s.groups, s.kernel, s.kernel};
  if (s.kind == LayerKind::linear) return {s.out_features, in.at(0)};
  throw ConfigError("layer '" + s.name + "' has no weights");
}

double WeightInit::stddev_for(const Shape& ws) const {
  if (kind == Kind::fixed) return stddev;
  const Index fan_in = ws.empty() ? 1 : shape_size(ws) / ws[0];
  return std::sqrt(2.0 / static_cast<double>(std::max<Index>(fan_in, 1)));
}

std::vector<LayerParamCount> count_parameters(const std::vector<LayerSpec>& specs, const Shape& sample_input) {
  std::vector<LayerParamCount> out;
  Shape s = sample_input;
  for (const auto& spec : specs) {
    const Shape next = infer_output_shape(spec, s);
    if (spec.has_params()) out.push_back({spec.name, shape_size(weight_shape(spec, s)), weight_shape(spec, s)[0]});
    s = next;
  }
  return out;
}

}  // namespace jigsaw
