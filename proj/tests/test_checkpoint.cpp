#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "sample/checkpoint.hpp"
#include "sample/rng.hpp"

using namespace sample;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST(Checkpoint, BitExactRoundTrip) {
  SeededRng rng(31);
  NamedParams params;
  params.emplace_back("embedding", Tensor::zeros(7, 5));
  params.emplace_back("head.weight", Tensor::zeros(3, 11));
  params.emplace_back("scalar", Tensor::scalar(0.0f));
  for (auto& [name, t] : params)
    for (auto& v : t.data()) v = rng.uniform(-10.0f, 10.0f);

  const std::string path = temp_path("sample_ckpt_roundtrip.smpl");
  save_checkpoint(path, params);
  NamedParams loaded = load_checkpoint(path);

  ASSERT_EQ(loaded.size(), params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    EXPECT_EQ(loaded[i].first, params[i].first);
    EXPECT_TRUE(loaded[i].second.data() == params[i].second.data());
  }
  std::remove(path.c_str());
}

TEST(Checkpoint, LoadIntoValidatesNamesAndShapes) {
  NamedParams params;
  params.emplace_back("w", Tensor::filled(2, 2, 1.0f));
  const std::string path = temp_path("sample_ckpt_validate.smpl");
  save_checkpoint(path, params);

  NamedParams renamed;
  renamed.emplace_back("v", Tensor::zeros(2, 2));
  EXPECT_THROW(load_checkpoint_into(path, renamed), std::runtime_error);

  NamedParams reshaped;
  reshaped.emplace_back("w", Tensor::zeros(4, 1));
  EXPECT_THROW(load_checkpoint_into(path, reshaped), std::runtime_error);

  NamedParams ok;
  ok.emplace_back("w", Tensor::zeros(2, 2));
  load_checkpoint_into(path, ok);
  EXPECT_FLOAT_EQ(ok[0].second.at(1, 1), 1.0f);
  std::remove(path.c_str());
}

TEST(Checkpoint, RejectsBadMagic) {
  const std::string path = temp_path("sample_ckpt_badmagic.smpl");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTSMPL";
  }
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
  std::remove(path.c_str());
}

TEST(Checkpoint, IdenticalFilesOnRewrite) {
  SeededRng rng(32);
  NamedParams params;
  params.emplace_back("a", Tensor::zeros(4, 4));
  for (auto& v : params[0].second.data()) v = rng.normal(0.0f, 1.0f);
  const std::string p1 = temp_path("sample_ckpt_a.smpl");
  const std::string p2 = temp_path("sample_ckpt_b.smpl");
  save_checkpoint(p1, params);
  save_checkpoint(p2, params);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  EXPECT_EQ(s1, s2);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}
