#include "jigsaw/cfn.hpp"

#include "jigsaw/kvtext.hpp"

namespace jigsaw {

void CfnConfig::validate() const {
  if (num_branches < 1) throw ConfigError("CfnConfig: num_branches must be >= 1");
  if (num_classes < 2) throw ConfigError("CfnConfig: num_classes must be >= 2");
  if (fc6_width < 1 || fc7_width < 1) throw ConfigError("CfnConfig: fc6/fc7 widths must be positive");
  if (branch.empty() || branch.back().kind != LayerKind::linear)
    throw ConfigError("CfnConfig: branch must end in the fc6 linear layer");
  if (branch.back().out_features != fc6_width)
    throw ConfigError("CfnConfig: fc6_width disagrees with the branch's last layer");
  for (const auto& s : branch) {
    if (s.kind == LayerKind::concat) throw ConfigError("CfnConfig: concat is not allowed inside the branch");
    if (s.kind == LayerKind::conv) {
      if (s.stride != first_conv_stride)
        throw ConfigError("CfnConfig: first conv stride " + std::to_string(s.stride) + " != first_conv_stride " +
                          std::to_string(first_conv_stride));
      break;
    }
  }
  // Throws ConfigError on any incompatible link.
  Shape s = tile_shape();
  for (const auto& l : branch) s = infer_output_shape(l, s);
  for (const auto& l : head()) s = infer_output_shape(l, s);
}

std::vector<LayerSpec> CfnConfig::head() const {
  return {LayerSpec::concat("concat", num_branches), LayerSpec::relu("relu6"), LayerSpec::linear("fc7", fc7_width),
          LayerSpec::relu("relu7"), LayerSpec::linear("fc8", num_classes)};
}

CfnConfig CfnConfig::toy(Index num_classes, Index num_branches) {
  CfnConfig c;
  c.branch = {LayerSpec::conv("conv1", 16, 5, 2, 2), LayerSpec::relu("relu1"), LayerSpec::maxpool("pool1", 2, 2),
              LayerSpec::conv("conv2", 32, 3, 1, 1), LayerSpec::relu("relu2"), LayerSpec::maxpool("pool2", 2, 2),
              LayerSpec::flatten("flatten"),         LayerSpec::linear("fc6", 64)};
  c.fc6_width = 64;
  c.fc7_width = 128;
  c.num_classes = num_classes;
  c.num_branches = num_branches;
  c.tile_side = 32;
  c.channels = 3;
  c.first_conv_stride = 2;
  return c;
}

CfnConfig CfnConfig::full(Index num_classes) {
  // Pools use one pixel of padding so 64 px tiles reach the 4x4x256 pool5 map:
  // 64 -conv1-> 27 -pool-> 14 -pool-> 7 -pool-> 4.
  CfnConfig c;
  c.branch = {LayerSpec::conv("conv1", 96, 11, 2, 0),       LayerSpec::relu("relu1"),
              LayerSpec::maxpool("pool1", 3, 2, 1),         LayerSpec::conv("conv2", 256, 5, 1, 2, 2),
              LayerSpec::relu("relu2"),                     LayerSpec::maxpool("pool2", 3, 2, 1),
              LayerSpec::conv("conv3", 384, 3, 1, 1),       LayerSpec::relu("relu3"),
              LayerSpec::conv("conv4", 384, 3, 1, 1, 2),    LayerSpec::relu("relu4"),
              LayerSpec::conv("conv5", 256, 3, 1, 1, 2),    LayerSpec::relu("relu5"),
              LayerSpec::maxpool("pool5", 3, 2, 1),         LayerSpec::flatten("flatten"),
              LayerSpec::linear("fc6", 512)};
  c.fc6_width = 512;
  c.fc7_width = 4096;
  c.num_classes = num_classes;
  c.num_branches = 9;
  c.tile_side = 64;
  c.channels = 3;
  c.first_conv_stride = 2;
  return c;
}

std::map<std::string, std::string> CfnConfig::to_map() const {
  std::map<std::string, std::string> kv{
      {"fc6_width", std::to_string(fc6_width)},
      {"fc7_width", std::to_string(fc7_width)},
      {"num_classes", std::to_string(num_classes)},
      {"num_branches", std::to_string(num_branches)},
      {"tile_side", std::to_string(tile_side)},
      {"channels", std::to_string(channels)},
      {"first_conv_stride", std::to_string(first_conv_stride)},
      {"branch_layers", std::to_string(branch.size())},
  };
  for (std::size_t i = 0; i < branch.size(); ++i) kv["branch." + std::to_string(i)] = branch[i].to_string();
  return kv;
}

CfnConfig CfnConfig::from_map(const std::map<std::string, std::string>& kv_in) {
  auto kv = kv_in;
  auto take = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("CfnConfig: missing key '" + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto take_int = [&](const std::string& key) {
    const std::string v = take(key);
    std::size_t used = 0;
    Index out = 0;
    try {
      out = std::stoll(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != v.size()) throw ConfigError("CfnConfig: '" + key + "' is not an integer");
    return out;
  };
  CfnConfig c;
  c.fc6_width = take_int("fc6_width");
  c.fc7_width = take_int("fc7_width");
  c.num_classes = take_int("num_classes");
  c.num_branches = take_int("num_branches");
  c.tile_side = take_int("tile_side");
  c.channels = take_int("channels");
  c.first_conv_stride = take_int("first_conv_stride");
  const Index layers = take_int("branch_layers");
  for (Index i = 0; i < layers; ++i) c.branch.push_back(LayerSpec::parse(take("branch." + std::to_string(i))));
  if (!kv.empty()) throw ConfigError("CfnConfig: unknown key '" + kv.begin()->first + "'");
  c.validate();
  return c;
}

std::string CfnConfig::to_text() const { return format_kv(to_map()); }

CfnConfig CfnConfig::from_text(const std::string& text) { return from_map(parse_kv(text)); }

std::vector<LayerSpec> alexnet_reference_layers(Index num_classes) {
  return {LayerSpec::conv("conv1", 96, 11, 4, 0),    LayerSpec::relu("relu1"),
          LayerSpec::maxpool("pool1", 3, 2),         LayerSpec::conv("conv2", 256, 5, 1, 2, 2),
          LayerSpec::relu("relu2"),                  LayerSpec::maxpool("pool2", 3, 2),
          LayerSpec::conv("conv3", 384, 3, 1, 1),    LayerSpec::relu("relu3"),
          LayerSpec::conv("conv4", 384, 3, 1, 1, 2), LayerSpec::relu("relu4"),
          LayerSpec::conv("conv5", 256, 3, 1, 1, 2), LayerSpec::relu("relu5"),
          LayerSpec::maxpool("pool5", 3, 2),         LayerSpec::flatten("flatten"),
          LayerSpec::linear("fc6", 4096),            LayerSpec::relu("relu6"),
          LayerSpec::linear("fc7", 4096),            LayerSpec::relu("relu7"),
          LayerSpec::linear("fc8", num_classes)};
}

Shape alexnet_reference_input() { return {3, 227, 227}; }

Tensor<float> stack_tiles(const std::vector<Tensor<float>>& tiles) {
  if (tiles.empty()) throw std::invalid_argument("stack_tiles: no tiles");
  const Shape per = tiles.front().shape();
  Shape shape{static_cast<Index>(tiles.size())};
  shape.insert(shape.end(), per.begin(), per.end());
  Tensor<float> out(shape);
  const Index n = shape_size(per);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    if (tiles[i].shape() != per) throw std::invalid_argument("stack_tiles: tiles differ in shape");
    out.values().segment(static_cast<Index>(i) * n, n) = tiles[i].values();
  }
  return out;
}

Tensor<float> stack_puzzles(const std::vector<PuzzleSample>& samples) {
  std::vector<Tensor<float>> all;
  for (const auto& s : samples) all.insert(all.end(), s.tiles.begin(), s.tiles.end());
  return stack_tiles(all);
}

}  // namespace jigsaw
