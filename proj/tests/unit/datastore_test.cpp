/*
 * Copyright 2026 The ncav Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ncav/datastore.hpp"

#include <random>

#include <gtest/gtest.h>

#include "json.hpp"
#include "ncav/npy.hpp"
#include "support/temp_dir.hpp"

namespace ncav::datastore {
namespace {

using testing::ReadFile;
using testing::TempDir;
using testing::WriteFile;

DatasetManifest BasicManifest() {
  DatasetManifest m;
  m.dataset_name = "toy";
  m.classes = {{0, "cat"}, {7, "dog"}};
  m.model_name = "resnet50";
  m.layer_name = "layer4";
  return m;
}

LoadedDataset ToyData(std::size_t n, std::size_t h = 2, std::size_t w = 2,
                      std::size_t c = 3) {
  LoadedDataset data;
  Tensor4<float> t(Shape4{n, h, w, c});
  float v = 0.0f;
  for (float& x : t.storage()) x = (v += 0.25f);
  data.batch = {t, SequentialIds(n)};
  for (std::size_t i = 0; i < n; ++i) {
    data.ground_truth.push_back(i % 2 == 0 ? 0 : 7);
    data.predictions.push_back(i % 3 == 0 ? 7 : 0);
  }
  return data;
}

template <typename F>
ErrorCode CodeOf(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kInvalidArgument;
}

reducer::ReducerModel SampleReducer() {
  reducer::ReducerModel m;
  m.dictionary = MatrixF(2, 3);
  m.dictionary << 0.5f, 0.0f, 1.25f, 3.0f, 1e-7f, 2.0f;
  m.fit_residual = 0.125f;
  m.iterations_run = 37;
  m.seed = 0xDEADBEEFCAFEull;
  return m;
}

surrogate::SurrogateTree SampleTree() {
  surrogate::TrainingSet data;
  data.features.scores = Matrix(6, 2);
  data.features.scores << 0.1, 0.9, 0.2, 0.1, 0.8, 0.7, 0.9, 0.2, 0.4, 0.4,
      0.6, 0.95;
  data.features.image_ids = SequentialIds(6);
  data.targets = {1, 1, 4, 4, 1, 9};
  return surrogate::FitTree(data, {.max_depth = 2});
}

TEST(Manifest, WriterOutputRoundTrips) {
  TempDir dir;
  const auto path = WriteDataset(dir.path(), BasicManifest(), ToyData(4));
  const DatasetManifest m = LoadManifest(path);
  EXPECT_EQ(m.image_count, 4u);
  EXPECT_EQ(m.ImageIds(), (std::vector<ImageId>{0, 1, 2, 3}));
  EXPECT_EQ(m.dataset_name, "toy");
  EXPECT_EQ(m.classes, BasicManifest().classes);
  EXPECT_EQ(m.model_name, "resnet50");
  EXPECT_EQ(m.layer_name, "layer4");
  EXPECT_EQ(m.ClassName(7), "dog");
  EXPECT_FALSE(m.ClassName(3).has_value());
  EXPECT_EQ(m.ClassIds(), (std::vector<ClassId>{0, 7}));
}

TEST(Manifest, PathsResolveAgainstManifestDirectory) {
  TempDir dir;
  const auto path = WriteDataset(dir / "nested", BasicManifest(), ToyData(2));
  const DatasetManifest m = LoadManifest(path);
  EXPECT_EQ(m.Resolve(m.feature_maps_path), dir / "nested" / "features.npy");
  const LoadedDataset loaded = LoadFeatureMaps(m);
  EXPECT_EQ(loaded.batch.size(), 2u);
}

TEST(Manifest, PredictionLengthMismatch) {
  TempDir dir;
  const auto path = WriteDataset(dir.path(), BasicManifest(), ToyData(4));
  const std::vector<std::int64_t> short_preds = {0, 7, 0};
  const std::size_t n = 3;
  npy::WriteInt64(dir / "preds.npy", short_preds,
                  std::span<const std::size_t>(&n, 1));
  EXPECT_EQ(CodeOf([&] { LoadManifest(path); }), ErrorCode::kMalformedManifest);
}

TEST(Manifest, MissingFeatureFile) {
  TempDir dir;
  const auto path = WriteDataset(dir.path(), BasicManifest(), ToyData(2));
  std::filesystem::remove(dir / "features.npy");
  EXPECT_EQ(CodeOf([&] { LoadManifest(path); }), ErrorCode::kMissingFile);
}

TEST(Manifest, MissingManifest) {
  TempDir dir;
  EXPECT_EQ(CodeOf([&] { LoadManifest(dir / "nope.json"); }),
            ErrorCode::kMissingFile);
}

TEST(Manifest, MalformedJsonAndFields) {
  TempDir dir;
  const auto path = WriteDataset(dir.path(), BasicManifest(), ToyData(2));
  const std::string good = ReadFile(path);

  WriteFile(path, "{ not json");
  EXPECT_EQ(CodeOf([&] { LoadManifest(path); }), ErrorCode::kMalformedManifest);

  auto doc = nlohmann::json::parse(good);
  doc.erase("layer_name");
  WriteFile(path, doc.dump());
  EXPECT_EQ(CodeOf([&] { LoadManifest(path); }), ErrorCode::kMalformedManifest);

  doc = nlohmann::json::parse(good);
  doc["classes"].push_back({{"id", 7}, {"name", "again"}});
  WriteFile(path, doc.dump());
  EXPECT_EQ(CodeOf([&] { LoadManifest(path); }), ErrorCode::kMalformedManifest);

  doc = nlohmann::json::parse(good);
  doc["image_paths"] = {"a.jpg"};
  WriteFile(path, doc.dump());
  EXPECT_EQ(CodeOf([&] { LoadManifest(path); }), ErrorCode::kMalformedManifest);
}

TEST(Manifest, NonContiguousClassIdsAllowed) {
  TempDir dir;
  DatasetManifest m = BasicManifest();
  m.classes = {{7, "dog"}, {0, "cat"}, {193, "bird"}};
  m.image_paths = std::vector<std::string>{"img/a.jpg", "img/b.jpg"};
  const DatasetManifest loaded =
      LoadManifest(WriteDataset(dir.path(), m, ToyData(2)));
  EXPECT_EQ(loaded.ClassIds(), (std::vector<ClassId>{0, 7, 193}));
  EXPECT_EQ(loaded.ImagePath(1), "img/b.jpg");
}

TEST(Manifest, ImageIdsExtension) {
  TempDir dir;
  DatasetManifest m = BasicManifest();
  m.image_ids = std::vector<ImageId>{40, 12};
  LoadedDataset data = ToyData(2);
  const DatasetManifest loaded = LoadManifest(WriteDataset(dir.path(), m, data));
  const LoadedDataset back = LoadFeatureMaps(loaded);
  EXPECT_EQ(back.batch.image_ids, (std::vector<ImageId>{40, 12}));
}

TEST(FeatureMaps, ShapePassthrough) {
  TempDir dir;
  LoadedDataset data = ToyData(2, 7, 7, 512);
  const LoadedDataset back =
      LoadFeatureMaps(LoadManifest(WriteDataset(dir.path(), BasicManifest(), data)));
  EXPECT_EQ(back.batch.tensor.shape(), (Shape4{2, 7, 7, 512}));
  EXPECT_EQ(back.batch, data.batch);
  EXPECT_EQ(back.ground_truth, data.ground_truth);
  EXPECT_EQ(back.predictions, data.predictions);
}

TEST(FeatureMaps, NegativeActivationRejected) {
  TempDir dir;
  LoadedDataset data = ToyData(2);
  data.batch.tensor.at(1, 0, 1, 2) = -0.5f;
  const auto path = WriteDataset(dir.path(), BasicManifest(), data);
  EXPECT_EQ(CodeOf([&] { LoadFeatureMaps(LoadManifest(path)); }),
            ErrorCode::kNegativeActivation);
}

TEST(FeatureMaps, NegativeZeroAccepted) {
  TempDir dir;
  LoadedDataset data = ToyData(1);
  data.batch.tensor.at(0, 0, 0, 0) = -0.0f;
  const auto path = WriteDataset(dir.path(), BasicManifest(), data);
  EXPECT_NO_THROW(LoadFeatureMaps(LoadManifest(path)));
}

TEST(FeatureMaps, NonFiniteRejected) {
  TempDir dir;
  LoadedDataset data = ToyData(1);
  data.batch.tensor.at(0, 1, 1, 0) = std::numeric_limits<float>::infinity();
  const auto path = WriteDataset(dir.path(), BasicManifest(), data);
  EXPECT_EQ(CodeOf([&] { LoadFeatureMaps(LoadManifest(path)); }),
            ErrorCode::kNonFinite);
}

TEST(FeatureMaps, LabelLengthMismatch) {
  TempDir dir;
  WriteDataset(dir.path(), BasicManifest(), ToyData(2));
  const std::vector<std::int64_t> labels = {0, 7, 0, 7, 0};
  const std::size_t n = labels.size();
  npy::WriteInt64(dir / "labels.npy", labels, std::span<const std::size_t>(&n, 1));
  DatasetManifest m = BasicManifest();
  m.base_dir = dir.path();
  m.feature_maps_path = "features.npy";
  m.ground_truth_path = "labels.npy";
  m.model_predictions_path = "preds.npy";
  EXPECT_EQ(CodeOf([&] { LoadFeatureMaps(m); }), ErrorCode::kShapeMismatch);
}

TEST(FeatureMaps, UnknownLabelRejected) {
  TempDir dir;
  LoadedDataset data = ToyData(2);
  data.predictions[1] = 5;
  const auto path = WriteDataset(dir.path(), BasicManifest(), data);
  EXPECT_EQ(CodeOf([&] { LoadFeatureMaps(LoadManifest(path)); }),
            ErrorCode::kMalformedManifest);
}

TEST(ReducerFile, RoundTripExact) {
  TempDir dir;
  const reducer::ReducerModel m = SampleReducer();
  SaveReducer(m, dir / "m.ncav");
  const reducer::ReducerModel back = LoadReducer(dir / "m.ncav");
  EXPECT_EQ(back, m);
  for (Eigen::Index i = 0; i < m.dictionary.size(); ++i) {
    EXPECT_EQ(back.dictionary.data()[i], m.dictionary.data()[i]);
  }
  SaveReducer(back, dir / "m2.ncav");
  EXPECT_EQ(ReadFile(dir / "m.ncav"), ReadFile(dir / "m2.ncav"));
}

TEST(ReducerFile, LayoutMatchesContainer) {
  const std::string bytes = EncodeReducer(SampleReducer());
  ASSERT_EQ(bytes.size(), 4 + 4 + 4 + 4 + 6 * 4 + 4 + 4 + 8u);
  EXPECT_EQ(bytes.substr(0, 4), "NCAV");
  std::uint32_t version = 0, rows = 0, cols = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&rows, bytes.data() + 8, 4);
  std::memcpy(&cols, bytes.data() + 12, 4);
  EXPECT_EQ(version, 1u);
  EXPECT_EQ(rows, 2u);
  EXPECT_EQ(cols, 3u);
  float d0 = 0;
  std::memcpy(&d0, bytes.data() + 16 + 2 * 4, 4);
  EXPECT_EQ(d0, 1.25f);
}

TEST(ReducerFile, TruncatedIsMalformed) {
  const std::string bytes = EncodeReducer(SampleReducer());
  for (std::size_t cut : {0ul, 3ul, 10ul, bytes.size() - 1}) {
    EXPECT_EQ(CodeOf([&] { DecodeReducer(bytes.substr(0, cut)); }),
              ErrorCode::kMalformedArtifact)
        << cut;
  }
  EXPECT_EQ(CodeOf([&] { DecodeReducer(bytes + "x"); }),
            ErrorCode::kMalformedArtifact);
  std::string bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_EQ(CodeOf([&] { DecodeReducer(bad_version); }),
            ErrorCode::kMalformedArtifact);
}

TEST(ReducerFile, UnwritablePathReportsPath) {
  const std::filesystem::path bad = "/nonexistent_dir_ncav/sub/m.ncav";
  try {
    SaveReducer(SampleReducer(), bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
    EXPECT_NE(std::string(e.what()).find(bad.string()), std::string::npos);
  }
}

TEST(TreeFile, DepthTwoRoundTrip) {
  TempDir dir;
  const surrogate::SurrogateTree tree = SampleTree();
  ASSERT_EQ(tree.depth, 2u);
  SaveTree(tree, dir / "t.tree");
  const surrogate::SurrogateTree back = LoadTree(dir / "t.tree");
  EXPECT_EQ(back, tree);
  SaveTree(back, dir / "t2.tree");
  EXPECT_EQ(ReadFile(dir / "t.tree"), ReadFile(dir / "t2.tree"));
}

TEST(TreeFile, WrongMagic) {
  std::string bytes = EncodeTree(SampleTree());
  bytes[0] = 'X';
  EXPECT_EQ(CodeOf([&] { DecodeTree(bytes); }), ErrorCode::kMalformedArtifact);
  EXPECT_EQ(CodeOf([&] { DecodeTree(EncodeReducer(SampleReducer())); }),
            ErrorCode::kMalformedArtifact);
}

TEST(TreeFile, TruncatedIsMalformed) {
  const std::string bytes = EncodeTree(SampleTree());
  for (std::size_t cut = 0; cut < bytes.size(); cut += 7) {
    EXPECT_EQ(CodeOf([&] { DecodeTree(bytes.substr(0, cut)); }),
              ErrorCode::kMalformedArtifact);
  }
}

TEST(TreeFile, PredictionsSurviveRoundTrip) {
  const surrogate::SurrogateTree tree = SampleTree();
  const surrogate::SurrogateTree back = DecodeTree(EncodeTree(tree));
  scorer::ConceptScoreMatrix x;
  x.scores = Matrix(6, 2);
  x.scores << 0.1, 0.9, 0.2, 0.1, 0.8, 0.7, 0.9, 0.2, 0.4, 0.4, 0.6, 0.95;
  x.image_ids = SequentialIds(6);
  EXPECT_EQ(surrogate::Predict(back, x), surrogate::Predict(tree, x));
}

TEST(TreeFile, MissingFile) {
  TempDir dir;
  EXPECT_EQ(CodeOf([&] { LoadTree(dir / "absent.tree"); }),
            ErrorCode::kMissingFile);
}

TEST(Npy, HeaderMatchesNumpyLayout) {
  TempDir dir;
  const std::vector<float> v = {1, 2, 3, 4, 5, 6};
  const std::size_t shape[2] = {2, 3};
  npy::WriteFloat32(dir / "a.npy", v, shape);
  const std::string bytes = ReadFile(dir / "a.npy");
  EXPECT_EQ(bytes.substr(0, 6), "\x93NUMPY");
  EXPECT_EQ(bytes[6], 1);
  EXPECT_EQ(bytes[7], 0);
  const npy::Header h = npy::ReadHeader(dir / "a.npy");
  EXPECT_EQ(h.data_offset % 64, 0u);
  EXPECT_EQ(bytes[h.data_offset - 1], '\n');
  EXPECT_EQ(npy::FormatHeaderDict("<f4", shape),
            "{'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }");
  const std::size_t one[1] = {5};
  EXPECT_EQ(npy::FormatHeaderDict("<i8", one),
            "{'descr': '<i8', 'fortran_order': False, 'shape': (5,), }");
  std::vector<std::size_t> got;
  EXPECT_EQ(npy::ReadFloat32(dir / "a.npy", &got), v);
  EXPECT_EQ(got, (std::vector<std::size_t>{2, 3}));
}

TEST(Npy, WrongDtypeRejected) {
  TempDir dir;
  const std::vector<std::int64_t> v = {1, 2};
  const std::size_t shape[1] = {2};
  npy::WriteInt64(dir / "l.npy", v, shape);
  EXPECT_EQ(CodeOf([&] { npy::ReadFloat32(dir / "l.npy", nullptr); }),
            ErrorCode::kMalformedArtifact);
  WriteFile(dir / "junk.npy", "not an npy file at all");
  EXPECT_EQ(CodeOf([&] { npy::ReadHeader(dir / "junk.npy"); }),
            ErrorCode::kMalformedArtifact);
}

}  // namespace
}  // namespace ncav::datastore
