#include "cfmg/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "cfmg/errors.hpp"

namespace cfmg::io {

using nlohmann::json;

namespace {

constexpr char kImageMagic[4] = {'D', 'I', 'M', 'G'};
constexpr char kCheckpointMagic[4] = {'C', 'F', 'M', 'G'};

class ByteWriter {
 public:
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  template <typename U>
  void little(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }
  void u32(std::uint32_t v) { little(v); }
  void u64(std::uint64_t v) { little(v); }
  void f32(float v) { little(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { little(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError(what_ + ": truncated file");
  }
  void raw(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  template <typename U>
  U little() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  std::uint32_t u32() { return little<std::uint32_t>(); }
  std::uint64_t u64() { return little<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  bool done() const { return pos_ == bytes_.size(); }
  const std::string& what() const { return what_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

json describe_layers(const nn::Network& net) {
  json layers = json::array();
  for (const auto& layer : net.layers()) {
    if (const auto* a = std::get_if<nn::AffineParams>(&layer)) {
      layers.push_back({{"type", "affine"}, {"in", a->in_features()}, {"out", a->out_features()}});
    } else if (const auto* b = std::get_if<nn::BatchNormParams>(&layer)) {
      layers.push_back({{"type", "batchnorm"},
                        {"features", b->features()},
                        {"momentum", b->momentum},
                        {"epsilon", b->epsilon}});
    } else if (const auto* c = std::get_if<nn::ScaleShift>(&layer)) {
      layers.push_back({{"type", "scale_shift"}, {"features", c->features()}});
    } else {
      const auto& s = std::get<nn::ActivationLayer>(layer);
      layers.push_back({{"type", "activation"}, {"kind", nn::to_string(s.kind)}});
    }
  }
  return layers;
}

nn::Network build_layers(const json& desc) {
  nn::Network net;
  for (const auto& l : desc) {
    const std::string type = l.at("type").get<std::string>();
    if (type == "affine") {
      net.add_layer(nn::AffineParams(l.at("in").get<Eigen::Index>(), l.at("out").get<Eigen::Index>()));
    } else if (type == "batchnorm") {
      net.add_layer(nn::BatchNormParams(l.at("features").get<Eigen::Index>(),
                                        l.at("momentum").get<double>(),
                                        l.at("epsilon").get<double>()));
    } else if (type == "scale_shift") {
      net.add_layer(nn::ScaleShift(l.at("features").get<Eigen::Index>()));
    } else if (type == "activation") {
      net.add_layer(nn::ActivationLayer{nn::activation_from_string(l.at("kind").get<std::string>())});
    } else {
      throw DataError("unknown layer type in checkpoint: " + type);
    }
  }
  return net;
}

void put_tensor(ByteWriter& w, const nn::Tensor2& t) {
  for (Eigen::Index i = 0; i < t.size(); ++i) w.f64(t.data()[i]);
}

void get_tensor(ByteReader& r, nn::Tensor2& t) {
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = r.f64();
}

std::uint64_t blob_size(const nn::Network& net) {
  std::uint64_t n = 0;
  for (const auto& layer : net.layers()) {
    if (const auto* a = std::get_if<nn::AffineParams>(&layer)) {
      n += static_cast<std::uint64_t>(a->weight.size() + a->bias.size());
    } else if (const auto* b = std::get_if<nn::BatchNormParams>(&layer)) {
      n += 4 * static_cast<std::uint64_t>(b->features());
    } else if (const auto* c = std::get_if<nn::ScaleShift>(&layer)) {
      n += 2 * static_cast<std::uint64_t>(c->features());
    }
  }
  return n;
}

void put_params(ByteWriter& w, const nn::Network& net) {
  for (const auto& layer : net.layers()) {
    if (const auto* a = std::get_if<nn::AffineParams>(&layer)) {
      put_tensor(w, a->weight);
      put_tensor(w, a->bias);
    } else if (const auto* b = std::get_if<nn::BatchNormParams>(&layer)) {
      put_tensor(w, b->gamma);
      put_tensor(w, b->beta);
      put_tensor(w, b->running_mean);
      put_tensor(w, b->running_var);
    } else if (const auto* c = std::get_if<nn::ScaleShift>(&layer)) {
      put_tensor(w, c->scale);
      put_tensor(w, c->shift);
    }
  }
}

void get_params(ByteReader& r, nn::Network& net) {
  for (auto& layer : net.layers()) {
    if (auto* a = std::get_if<nn::AffineParams>(&layer)) {
      get_tensor(r, a->weight);
      get_tensor(r, a->bias);
    } else if (auto* b = std::get_if<nn::BatchNormParams>(&layer)) {
      get_tensor(r, b->gamma);
      get_tensor(r, b->beta);
      get_tensor(r, b->running_mean);
      get_tensor(r, b->running_var);
    } else if (auto* c = std::get_if<nn::ScaleShift>(&layer)) {
      get_tensor(r, c->scale);
      get_tensor(r, c->shift);
    }
  }
}

json meta_to_json(const TrainingMetadata& m) {
  return {{"epochs", m.epochs},
          {"final_train_loss", m.final_train_loss},
          {"final_val_loss", m.final_val_loss},
          {"seed", m.seed},
          {"config", m.config}};
}

TrainingMetadata meta_from_json(const json& j) {
  TrainingMetadata m;
  m.epochs = j.at("epochs").get<int>();
  m.final_train_loss = j.at("final_train_loss").get<double>();
  m.final_val_loss = j.at("final_val_loss").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config = j.at("config").get<std::string>();
  return m;
}

void write_checkpoint(const std::filesystem::path& path, CheckpointKind kind, const json& desc,
                      const std::vector<const nn::Network*>& nets) {
  ByteWriter w;
  w.raw(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(kind));
  const std::string text = desc.dump();
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.raw(text.data(), text.size());
  std::uint64_t count = 0;
  for (const auto* n : nets) count += blob_size(*n);
  w.u64(count);
  for (const auto* n : nets) put_params(w, *n);
  write_bytes(path, w.bytes());
}

/// Validates the header and returns the descriptor; `reader` is left at the blob count.
json read_header(ByteReader& r, CheckpointKind expected) {
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw DataError(r.what() + ": not a checkpoint (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw DataError(r.what() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t kind = r.u32();
  if (kind != static_cast<std::uint32_t>(expected)) {
    throw DataError(r.what() + ": wrong checkpoint kind " + std::to_string(kind));
  }
  const std::uint32_t len = r.u32();
  std::string text(len, '\0');
  r.raw(text.data(), len);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(r.what() + ": malformed descriptor: " + e.what());
  }
}

void read_blob(ByteReader& r, const std::vector<nn::Network*>& nets) {
  std::uint64_t expected = 0;
  for (const auto* n : nets) expected += blob_size(*n);
  const std::uint64_t count = r.u64();
  if (count != expected) {
    throw DataError(r.what() + ": parameter count " + std::to_string(count) +
                    " does not match architecture (" + std::to_string(expected) + ")");
  }
  for (auto* n : nets) get_params(r, *n);
  if (!r.done()) throw DataError(r.what() + ": trailing bytes after parameters");
}

json pose_json(const GraspPose& g) {
  const PoseVec7 v = to_vec7(g);
  return json::array({v[0], v[1], v[2], v[3], v[4], v[5], v[6]});
}

GraspPose pose_from_json(const json& j, double width) {
  if (!j.is_array() || j.size() != 7) throw DataError("pose must be a 7-tuple");
  PoseVec7 v;
  for (int i = 0; i < 7; ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
  // Stored poses are unit quaternions already; keep the exact stored bits.
  GraspPose g;
  g.orientation = Eigen::Quaterniond(v[0], v[1], v[2], v[3]);
  g.position = v.position();
  g.width = width;
  return g;
}

json scene_json(const SceneSpec& s) {
  return {{"shape", to_string(s.shape)},
          {"dims", {s.dims.x(), s.dims.y(), s.dims.z()}},
          {"position", {s.position.x(), s.position.y()}},
          {"yaw", s.yaw},
          {"sink", s.sink},
          {"seed", s.seed}};
}

SceneSpec scene_from(const json& j) {
  SceneSpec s;
  try {
    s.shape = shape_from_string(j.at("shape").get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  const auto& d = j.at("dims");
  s.dims = {d.at(0).get<double>(), d.at(1).get<double>(), d.at(2).get<double>()};
  const auto& p = j.at("position");
  s.position = {p.at(0).get<double>(), p.at(1).get<double>()};
  s.yaw = j.at("yaw").get<double>();
  s.sink = j.value("sink", 0.0);
  s.seed = j.value("seed", std::uint64_t{0});
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid scene: ") + e.what());
  }
  return s;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

json parse_header(const std::vector<std::string>& lines, const std::string& format,
                  const std::filesystem::path& path) {
  if (lines.empty()) throw DataError(path.string() + ": empty file");
  json h;
  try {
    h = json::parse(lines.front());
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed header: " + e.what());
  }
  if (h.value("format", "") != format) throw DataError(path.string() + ": not a " + format + " file");
  const auto version = h.value("version", 0u);
  if (version != kDatasetVersion) {
    throw DataError(path.string() + ": unsupported version " + std::to_string(version));
  }
  return h;
}

}  // namespace

std::vector<std::uint8_t> encode_depth_image(const DepthImage& img) {
  if (img.values.size() != static_cast<std::size_t>(img.width) * img.height) {
    throw std::invalid_argument("depth image size does not match its dimensions");
  }
  ByteWriter w;
  w.raw(kImageMagic, 4);
  w.u32(kDepthImageVersion);
  w.u32(img.width);
  w.u32(img.height);
  for (float v : img.values) w.f32(v);
  return std::move(w.bytes());
}

DepthImage decode_depth_image(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "depth image");
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kImageMagic, 4) != 0) throw DataError("depth image: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kDepthImageVersion) {
    throw DataError("depth image: unsupported version " + std::to_string(version));
  }
  DepthImage img;
  img.width = r.u32();
  img.height = r.u32();
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  r.need(n * 4);
  img.values.resize(n);
  for (auto& v : img.values) v = r.f32();
  if (!r.done()) throw DataError("depth image: trailing bytes");
  return img;
}

void write_depth_image(const std::filesystem::path& path, const DepthImage& img) {
  write_bytes(path, encode_depth_image(img));
}

DepthImage read_depth_image(const std::filesystem::path& path) {
  try {
    return decode_depth_image(read_bytes(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

void save_checkpoint(const std::filesystem::path& path, const VelocityNet& net,
                     const TrainingMetadata& meta) {
  json desc = {{"kind", "velocity"},
               {"layers", describe_layers(net.network())},
               {"output_activation", nn::to_string(net.output_activation())},
               {"optimizer_state", false},
               {"training", meta_to_json(meta)}};
  write_checkpoint(path, CheckpointKind::Velocity, desc, {&net.network()});
}

void save_checkpoint(const std::filesystem::path& path, const AutoencoderNet& net,
                     const TrainingMetadata& meta) {
  json desc = {{"kind", "autoencoder"},
               {"image_width", net.image_width()},
               {"image_height", net.image_height()},
               {"encoder", describe_layers(net.encoder())},
               {"decoder", describe_layers(net.decoder())},
               {"optimizer_state", false},
               {"training", meta_to_json(meta)}};
  write_checkpoint(path, CheckpointKind::Autoencoder, desc, {&net.encoder(), &net.decoder()});
}

LoadedVelocity load_velocity_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  ByteReader r(bytes, path.string());
  const json desc = read_header(r, CheckpointKind::Velocity);
  try {
    nn::Network net = build_layers(desc.at("layers"));
    read_blob(r, {&net});
    return {VelocityNet(std::move(net)), meta_from_json(desc.at("training"))};
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed descriptor: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

LoadedAutoencoder load_autoencoder_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  ByteReader r(bytes, path.string());
  const json desc = read_header(r, CheckpointKind::Autoencoder);
  try {
    nn::Network enc = build_layers(desc.at("encoder"));
    nn::Network dec = build_layers(desc.at("decoder"));
    read_blob(r, {&enc, &dec});
    return {AutoencoderNet(desc.at("image_width").get<std::uint32_t>(),
                           desc.at("image_height").get<std::uint32_t>(), std::move(enc),
                           std::move(dec)),
            meta_from_json(desc.at("training"))};
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed descriptor: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string scene_to_json(const SceneSpec& s) { return scene_json(s).dump(); }

SceneSpec scene_from_json(const std::string& text) {
  try {
    return scene_from(json::parse(text));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed scene: ") + e.what());
  }
}

void write_dataset(const std::filesystem::path& dir, const GeneratedData& data,
                   std::uint64_t seed, const std::string& config) {
  std::filesystem::create_directories(dir / "images");
  std::ostringstream pairs;
  pairs << json{{"format", "cfmg-pairs"},
                {"version", kDatasetVersion},
                {"seed", seed},
                {"count", data.pairs.size()},
                {"config", config}}
               .dump()
        << '\n';
  std::ostringstream corpus;
  corpus << json{{"format", "cfmg-corpus"},
                 {"version", kDatasetVersion},
                 {"seed", seed},
                 {"count", data.corpus.size()},
                 {"config", config}}
                .dump()
         << '\n';

  auto image_name = [](std::size_t i) {
    std::ostringstream name;
    name << "images/img_" << std::setw(4) << std::setfill('0') << i << ".dimg";
    return name.str();
  };
  // Pair images are the head of the corpus, so they share files.
  for (std::size_t i = 0; i < data.corpus.size(); ++i) {
    write_depth_image(dir / image_name(i), data.corpus[i]);
    corpus << json{{"image", image_name(i)}}.dump() << '\n';
  }
  for (std::size_t i = 0; i < data.pairs.size(); ++i) {
    const auto& p = data.pairs[i];
    if (i >= data.corpus.size() || !(data.corpus[i] == data.pair_images[i])) {
      throw std::logic_error("corpus must start with the pair images");
    }
    pairs << json{{"template", p.template_name},
                  {"scene", scene_json(p.scene)},
                  {"rank", p.rank},
                  {"depth_offset", p.depth_offset},
                  {"width", p.g_rigid.width},
                  {"g_rigid", pose_json(p.g_rigid)},
                  {"g_soft", pose_json(p.g_soft)},
                  {"image", image_name(i)}}
                 .dump()
          << '\n';
  }
  write_text_file(dir / "dataset.jsonl", pairs.str());
  write_text_file(dir / "corpus.jsonl", corpus.str());
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto pair_path = dir / "dataset.jsonl";
  const auto corpus_path = dir / "corpus.jsonl";
  if (!std::filesystem::exists(pair_path)) {
    throw DataError("no dataset at " + dir.string() + " (run gen-data first)");
  }
  Dataset ds;
  const auto lines = read_lines(pair_path);
  const json header = parse_header(lines, "cfmg-pairs", pair_path);
  ds.seed = header.value("seed", std::uint64_t{0});
  ds.config = header.value("config", "");
  try {
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const json j = json::parse(lines[i]);
      DatasetRecord rec;
      rec.pair.template_name = j.at("template").get<std::string>();
      rec.pair.scene = scene_from(j.at("scene"));
      rec.pair.rank = j.at("rank").get<int>();
      rec.pair.depth_offset = j.at("depth_offset").get<double>();
      const double width = j.at("width").get<double>();
      rec.pair.g_rigid = pose_from_json(j.at("g_rigid"), width);
      rec.pair.g_soft = pose_from_json(j.at("g_soft"), width);
      rec.image = j.at("image").get<std::string>();
      ds.records.push_back(std::move(rec));
    }
    if (std::filesystem::exists(corpus_path)) {
      const auto clines = read_lines(corpus_path);
      parse_header(clines, "cfmg-corpus", corpus_path);
      for (std::size_t i = 1; i < clines.size(); ++i) {
        ds.corpus.push_back(json::parse(clines[i]).at("image").get<std::string>());
      }
    }
  } catch (const json::exception& e) {
    throw DataError(pair_path.string() + ": malformed record: " + e.what());
  }
  return ds;
}

}  // namespace cfmg::io
