#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cfmg/errors.hpp"
#include "cfmg/io.hpp"

namespace cfmg {
namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("cfmg_io_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

nn::Tensor2 probe_batch(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  nn::Tensor2 x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
  return x;
}

TEST(DepthImageFile, BitwiseRoundTrip) {
  const auto dir = temp_dir("dimg");
  Rng rng(1);
  DepthImage img(7, 5);
  for (float& v : img.values) v = static_cast<float>(rng.uniform(0.0, 0.5));
  img.values[3] = 0.1f + 1e-7f;
  io::write_depth_image(dir / "a.dimg", img);
  EXPECT_EQ(io::read_depth_image(dir / "a.dimg"), img);
  const auto bytes = io::encode_depth_image(img);
  EXPECT_EQ(bytes.size(), 16u + 4u * 35u);
  EXPECT_EQ(io::read_bytes(dir / "a.dimg"), bytes);
}

TEST(DepthImageFile, RejectsCorruption) {
  DepthImage img(4, 4, 0.5f);
  auto bytes = io::encode_depth_image(img);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(io::decode_depth_image(bad_magic), DataError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(io::decode_depth_image(bad_version), DataError);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(io::decode_depth_image(truncated), DataError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(io::decode_depth_image(trailing), DataError);
  EXPECT_THROW(io::read_depth_image("/nonexistent/x.dimg"), DataError);
}

TEST(Checkpoint, VelocityRoundTripIsBitwise) {
  const auto dir = temp_dir("vel");
  Rng rng(2);
  VelocityNet net(rng, nn::Activation::Relu, 0.2, 1e-4);
  // Give batch norm and the normalizers non-trivial state.
  net.forward(probe_batch(rng, 16, 136), nn::Mode::Train);
  auto& in = std::get<nn::ScaleShift>(net.network().layers().front());
  in.scale = probe_batch(rng, 1, 136);
  in.shift = probe_batch(rng, 1, 136);
  io::TrainingMetadata meta{123, 0.25, 0.5, 77, "seed=77\n"};
  io::save_checkpoint(dir / "v.ckpt", net, meta);
  const io::LoadedVelocity loaded = io::load_velocity_checkpoint(dir / "v.ckpt");
  EXPECT_EQ(loaded.meta, meta);
  EXPECT_EQ(loaded.net.output_activation(), nn::Activation::Relu);
  const nn::Tensor2 x = probe_batch(rng, 32, 136);
  EXPECT_EQ(loaded.net.predict(x), net.predict(x));
  // Saving again reproduces the file byte for byte.
  io::save_checkpoint(dir / "v2.ckpt", loaded.net, loaded.meta);
  EXPECT_EQ(io::read_bytes(dir / "v.ckpt"), io::read_bytes(dir / "v2.ckpt"));
}

TEST(Checkpoint, AutoencoderRoundTripIsBitwise) {
  const auto dir = temp_dir("ae");
  Rng rng(3);
  AutoencoderNet net(16, 16, rng);
  io::save_checkpoint(dir / "e.ckpt", net, io::TrainingMetadata{});
  const io::LoadedAutoencoder loaded = io::load_autoencoder_checkpoint(dir / "e.ckpt");
  EXPECT_EQ(loaded.net.image_width(), 16u);
  const nn::Tensor2 x = probe_batch(rng, 32, 256).cwiseAbs();
  EXPECT_EQ(loaded.net.encode_rows(x), net.encode_rows(x));
  EXPECT_EQ(loaded.net.reconstruct_rows(x), net.reconstruct_rows(x));
}

TEST(Checkpoint, RejectsCorruptionAndWrongKind) {
  const auto dir = temp_dir("bad");
  Rng rng(4);
  VelocityNet net(rng);
  io::save_checkpoint(dir / "v.ckpt", net, io::TrainingMetadata{});
  EXPECT_THROW(io::load_autoencoder_checkpoint(dir / "v.ckpt"), DataError);

  const auto bytes = io::read_bytes(dir / "v.ckpt");
  auto bad = bytes;
  bad[1] = 'X';
  write_bytes(dir / "magic.ckpt", bad);
  EXPECT_THROW(io::load_velocity_checkpoint(dir / "magic.ckpt"), DataError);
  bad = bytes;
  bad[4] = 2;
  write_bytes(dir / "version.ckpt", bad);
  EXPECT_THROW(io::load_velocity_checkpoint(dir / "version.ckpt"), DataError);
  bad = bytes;
  bad.resize(bytes.size() - 8);
  write_bytes(dir / "short.ckpt", bad);
  EXPECT_THROW(io::load_velocity_checkpoint(dir / "short.ckpt"), DataError);
  bad = bytes;
  bad.push_back(1);
  write_bytes(dir / "long.ckpt", bad);
  EXPECT_THROW(io::load_velocity_checkpoint(dir / "long.ckpt"), DataError);
  EXPECT_THROW(io::load_velocity_checkpoint(dir / "missing.ckpt"), DataError);
}

TEST(Dataset, WriteReadRoundTrip) {
  const auto dir = temp_dir("data");
  Rng rng(5);
  GenerateOptions opts;
  opts.pairs_per_object = 2;
  opts.corpus_size = 24;
  const auto templates = default_seen_templates();
  const GeneratedData data = generate_dataset(templates, opts, rng);
  io::write_dataset(dir, data, 5, "pairs_per_object=2\n");
  const io::Dataset back = io::read_dataset(dir);
  EXPECT_EQ(back.seed, 5u);
  EXPECT_EQ(back.config, "pairs_per_object=2\n");
  ASSERT_EQ(back.records.size(), data.pairs.size());
  EXPECT_EQ(back.corpus.size(), 24u);
  for (std::size_t i = 0; i < data.pairs.size(); ++i) {
    const auto& a = data.pairs[i];
    const auto& b = back.records[i].pair;
    EXPECT_EQ(a.scene, b.scene);
    EXPECT_EQ(a.template_name, b.template_name);
    EXPECT_EQ(a.rank, b.rank);
    EXPECT_EQ(to_vec7(a.g_rigid), to_vec7(b.g_rigid));
    EXPECT_EQ(to_vec7(a.g_soft), to_vec7(b.g_soft));
    EXPECT_EQ(io::read_depth_image(dir / back.records[i].image), data.pair_images[i]);
  }
  for (std::size_t i = 0; i < back.corpus.size(); ++i) {
    EXPECT_EQ(io::read_depth_image(dir / back.corpus[i]), data.corpus[i]);
  }
}

TEST(Dataset, RejectsUnknownVersionAndMissingFiles) {
  const auto dir = temp_dir("baddata");
  EXPECT_THROW(io::read_dataset(dir), DataError);
  io::write_text_file(dir / "dataset.jsonl",
                      "{\"format\":\"cfmg-pairs\",\"version\":99,\"seed\":1,\"count\":0,\"config\":\"\"}\n");
  io::write_text_file(dir / "corpus.jsonl",
                      "{\"format\":\"cfmg-corpus\",\"version\":1,\"count\":0}\n");
  EXPECT_THROW(io::read_dataset(dir), DataError);
}

TEST(SceneJson, RoundTripAndValidation) {
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    const SceneSpec s = random_primitive(rng);
    EXPECT_EQ(io::scene_from_json(io::scene_to_json(s)), s);
  }
  EXPECT_THROW(io::scene_from_json("{not json"), DataError);
  EXPECT_THROW(io::scene_from_json(R"({"shape":"torus","dims":[1,1,1],"position":[0,0]})"),
               DataError);
  EXPECT_THROW(
      io::scene_from_json(R"({"shape":"sphere","dims":[0.5,0,0],"position":[0,0],"yaw":0})"),
      DataError);
}

}  // namespace
}  // namespace cfmg
