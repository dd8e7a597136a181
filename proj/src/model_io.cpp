/* Copyright 2026 The remdet-desk Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "remdet/model_io.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <set>

#include "json.hpp"

namespace remdet {

using nlohmann::json;

namespace {

// ---- config ---------------------------------------------------------------

[[noreturn]] void config_error(ErrorCode code, const std::string& path, const std::string& msg) {
  throw Error(code, msg + " at " + (path.empty() ? "/" : path), path);
}

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) config_error(ErrorCode::kInvalidConfig, path_, "expected an object");
  }

  // Rejects keys outside `allowed`.
  void only(std::initializer_list<std::string_view> allowed) const {
    for (const auto& [key, _] : j_.items()) {
      bool ok = false;
      for (auto a : allowed) ok = ok || key == a;
      if (!ok) config_error(ErrorCode::kInvalidConfig, at(key), "unknown key '" + key + "'");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string at(const std::string& key) const { return path_ + "/" + key; }
  const json& raw(const std::string& key) const {
    if (!has(key)) config_error(ErrorCode::kInvalidConfig, at(key), "missing required key");
    return j_.at(key);
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback, bool required = false) const {
    if (!has(key)) {
      if (required) raw(key);
      return fallback;
    }
    const json& v = j_.at(key);
    if (!v.is_number_integer()) config_error(ErrorCode::kInvalidConfig, at(key), "expected an integer");
    return v.get<std::int64_t>();
  }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number()) config_error(ErrorCode::kInvalidConfig, at(key), "expected a number");
    return v.get<double>();
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_boolean()) config_error(ErrorCode::kInvalidConfig, at(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback, bool required = false) const {
    if (!has(key)) {
      if (required) raw(key);
      return fallback;
    }
    const json& v = j_.at(key);
    if (!v.is_string()) config_error(ErrorCode::kInvalidConfig, at(key), "expected a string");
    return v.get<std::string>();
  }

 private:
  const json& j_;
  std::string path_;
};

StageCfg parse_stage(const json& j, const std::string& path) {
  Reader r(j, path);
  r.only({"width", "blocks", "block", "e", "retain_gate", "downsample", "ced_t"});
  StageCfg s;
  s.width = r.integer("width", 0, true);
  s.blocks = r.integer("blocks", 1, true);
  const std::string kind = r.string("block", "gatedffn", true);
  const auto block = parse_stage_block(kind);
  if (!block) {
    config_error(ErrorCode::kUnknownBlockKind, r.at("block"),
                 "unknown block kind '" + kind + "' (expected convffn, mult, gatedffn, c2f or channelc2f)");
  }
  s.block = *block;
  s.e = r.number("e", 3.0);
  s.retain_gate = r.boolean("retain_gate", false);
  const std::string down = r.string("downsample", "ced");
  if (down == "ced") {
    s.downsample = Downsample::kCED;
  } else if (down == "conv") {
    s.downsample = Downsample::kConv;
  } else if (down == "none") {
    s.downsample = Downsample::kNone;
  } else {
    config_error(ErrorCode::kInvalidConfig, r.at("downsample"), "downsample must be ced, conv or none");
  }
  s.ced_t = r.integer("ced_t", 1);
  return s;
}

ModelCfg parse_tree(const json& root) {
  Reader r(root, "");
  r.only({"name", "dtype", "in_channels", "stem", "stages", "head", "deploy"});
  ModelCfg cfg;
  cfg.name = r.string("name", "model");
  const std::string dtype = r.string("dtype", "f32");
  if (dtype == "f32") {
    cfg.dtype = DType::kF32;
  } else if (dtype == "f64") {
    cfg.dtype = DType::kF64;
  } else {
    config_error(ErrorCode::kInvalidConfig, "/dtype", "dtype must be f32 or f64");
  }
  cfg.in_channels = r.integer("in_channels", 3);
  if (r.has("stem")) {
    Reader s(r.raw("stem"), "/stem");
    s.only({"out_channels", "kernel", "stride"});
    cfg.stem.out_channels = s.integer("out_channels", cfg.stem.out_channels);
    cfg.stem.kernel = s.integer("kernel", cfg.stem.kernel);
    cfg.stem.stride = s.integer("stride", cfg.stem.stride);
  }
  const json& stages = r.raw("stages");
  if (!stages.is_array()) config_error(ErrorCode::kInvalidConfig, "/stages", "expected an array");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    cfg.stages.push_back(parse_stage(stages[i], "/stages/" + std::to_string(i)));
  }
  if (r.has("head")) {
    Reader h(r.raw("head"), "/head");
    h.only({"kind", "classes"});
    const std::string kind = h.string("kind", "none");
    if (kind == "none") {
      cfg.head.kind = HeadKind::kNone;
    } else if (kind == "toy_classifier") {
      cfg.head.kind = HeadKind::kToyClassifier;
    } else {
      config_error(ErrorCode::kInvalidConfig, "/head/kind", "head kind must be none or toy_classifier");
    }
    cfg.head.classes = h.integer("classes", cfg.head.classes);
  }
  cfg.deploy = r.boolean("deploy", false);
  cfg.validate();
  return cfg;
}

// ---- weights --------------------------------------------------------------

constexpr char kMagic[4] = {'R', 'M', 'D', 'T'};

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      fail(ErrorCode::kTruncatedFile, std::string("file ends inside ") + what + " at byte " + std::to_string(pos_));
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  template <typename U>
  U le(const char* what) {
    const auto s = take(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(s[i]) << (8 * i));
    return v;
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

ModelCfg parse_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    config_error(ErrorCode::kSyntaxError, "", std::string("malformed config: ") + e.what());
  }
  return parse_tree(root);
}

ModelCfg load_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string config_to_json(const ModelCfg& cfg, int indent) {
  json root;
  root["name"] = cfg.name;
  root["dtype"] = cfg.dtype == DType::kF64 ? "f64" : "f32";
  root["in_channels"] = cfg.in_channels;
  root["stem"] = {{"out_channels", cfg.stem.out_channels}, {"kernel", cfg.stem.kernel}, {"stride", cfg.stem.stride}};
  json stages = json::array();
  for (const auto& s : cfg.stages) {
    stages.push_back({{"width", s.width},
                      {"blocks", s.blocks},
                      {"block", std::string(stage_block_name(s.block))},
                      {"e", s.e},
                      {"retain_gate", s.retain_gate},
                      {"downsample", std::string(downsample_name(s.downsample))},
                      {"ced_t", s.ced_t}});
  }
  root["stages"] = stages;
  root["head"] = {{"kind", cfg.head.kind == HeadKind::kToyClassifier ? "toy_classifier" : "none"},
                  {"classes", cfg.head.classes}};
  root["deploy"] = cfg.deploy;
  return root.dump(indent);
}

template <typename T>
std::vector<std::uint8_t> encode_weights(const ParamStore<T>& params) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kWeightsVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, e] : params.entries()) {  // std::map: sorted names
    if (name.size() > 0xFFFF) fail(ErrorCode::kShapeMismatch, "parameter name too long: " + name);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(dtype_of<T>()));
    out.push_back(static_cast<std::uint8_t>(e.value.rank()));
    for (std::int64_t d : e.value.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (T v : e.value.data()) put_le<Bits>(out, std::bit_cast<Bits>(v));
  }
  return out;
}

std::vector<WeightRecord> decode_weights(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  const auto magic = in.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) fail(ErrorCode::kBadMagic, "not an RMDT file");
  const auto version = in.le<std::uint32_t>("version");
  if (version != kWeightsVersion) {
    fail(ErrorCode::kVersionUnsupported, "RMDT version " + std::to_string(version) + " is not supported");
  }
  const auto count = in.le<std::uint32_t>("record count");
  std::vector<WeightRecord> out;
  std::set<std::string> names;
  for (std::uint32_t r = 0; r < count; ++r) {
    WeightRecord rec;
    const auto len = in.le<std::uint16_t>("name length");
    const auto name = in.take(len, "name");
    rec.name.assign(name.begin(), name.end());
    if (!names.insert(rec.name).second) fail(ErrorCode::kShapeMismatch, "duplicate record " + rec.name);
    const auto dtype = in.le<std::uint8_t>("dtype");
    if (dtype > 1) fail(ErrorCode::kShapeMismatch, "record " + rec.name + " has unknown dtype " + std::to_string(dtype));
    rec.dtype = static_cast<DType>(dtype);
    const auto rank = in.le<std::uint8_t>("rank");
    if (rank < 1 || rank > 4) fail(ErrorCode::kShapeMismatch, "record " + rec.name + " has rank " + std::to_string(rank));
    std::uint64_t numel = 1;
    for (int i = 0; i < rank; ++i) {
      const auto d = in.le<std::uint32_t>("dims");
      if (d == 0) fail(ErrorCode::kShapeMismatch, "record " + rec.name + " has a zero extent");
      rec.shape.push_back(d);
      numel *= d;
    }
    const std::size_t width = rec.dtype == DType::kF32 ? 4 : 8;
    if (numel > (bytes.size() - in.pos()) / width) {
      fail(ErrorCode::kTruncatedFile, "file ends inside the data of " + rec.name);
    }
    rec.values.reserve(numel);
    for (std::uint64_t i = 0; i < numel; ++i) {
      if (rec.dtype == DType::kF32) {
        rec.values.push_back(std::bit_cast<float>(in.le<std::uint32_t>("data")));
      } else {
        rec.values.push_back(std::bit_cast<double>(in.le<std::uint64_t>("data")));
      }
    }
    out.push_back(std::move(rec));
  }
  if (!in.done()) fail(ErrorCode::kShapeMismatch, "trailing bytes after the last record");
  return out;
}

template <typename T>
Model<T> model_from_records(const std::vector<WeightRecord>& records, const ModelCfg& cfg) {
  Model<T> model;
  model.cfg = cfg;
  model.cfg.dtype = dtype_of<T>();
  model.nodes = expand_nodes(cfg);
  const auto specs = model_param_specs(cfg);
  std::map<std::string, const WeightRecord*> by_name;
  for (const auto& r : records) by_name.emplace(r.name, &r);
  for (const auto& s : specs) {
    auto it = by_name.find(s.name);
    if (it == by_name.end()) fail(ErrorCode::kShapeMismatch, "weights file lacks " + s.name);
    const WeightRecord& r = *it->second;
    if (r.shape != s.shape) {
      fail(ErrorCode::kShapeMismatch, s.name + ": stored " + shape_str(r.shape) + ", expected " + shape_str(s.shape));
    }
    std::vector<T> data(r.values.begin(), r.values.end());
    model.params.add(s.name, Tensor<T>::from_data(s.shape, std::move(data)), s.kind);
    by_name.erase(it);
  }
  if (!by_name.empty()) {
    fail(ErrorCode::kShapeMismatch, "weights file has unexpected record " + by_name.begin()->first);
  }
  return model;
}

template <typename T>
void save_weights(const Model<T>& model, const std::filesystem::path& path) {
  write_file(path, encode_weights(model.params));
}

template <typename T>
Model<T> load_weights(const std::filesystem::path& path, const ModelCfg& cfg) {
  return model_from_records<T>(decode_weights(read_file(path)), cfg);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIoError, "write failed for " + path.string());
}

#define REMDET_INSTANTIATE_IO(T)                                                                   \
  template std::vector<std::uint8_t> encode_weights<T>(const ParamStore<T>&);                      \
  template void save_weights<T>(const Model<T>&, const std::filesystem::path&);                    \
  template Model<T> load_weights<T>(const std::filesystem::path&, const ModelCfg&);                \
  template Model<T> model_from_records<T>(const std::vector<WeightRecord>&, const ModelCfg&);

REMDET_INSTANTIATE_IO(float)
REMDET_INSTANTIATE_IO(double)

}  // namespace remdet
