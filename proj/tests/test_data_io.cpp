#include <filesystem>
#include <fstream>

#include "gazeseg/codec.hpp"
#include "gazeseg/data_io.hpp"
#include "gazeseg/metrics.hpp"
#include "gazeseg/rle.hpp"
#include "gazeseg/seg_backend.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gazeseg;
namespace fs = std::filesystem;

namespace {

std::vector<std::int16_t> ramp(int n, int start = 0) {
  std::vector<std::int16_t> v;
  for (int i = 0; i < n; ++i) v.push_back(static_cast<std::int16_t>(start + i));
  return v;
}

fs::path scratch_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("gazeseg_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

LabelSlice labels_from(const std::vector<std::string>& rows) {
  LabelSlice ls;
  ls.height = static_cast<int>(rows.size());
  ls.width = static_cast<int>(rows[0].size());
  for (const auto& r : rows)
    for (char ch : r) ls.labels.push_back(ch == '.' ? 0 : ch - '0');
  return ls;
}

}  // namespace

TEST_CASE("NIfTI int16 little endian") {
  // W=5, H=4, D=2: x runs fastest in the file.
  oracle::NiftiBuilder b({3, 5, 4, 2, 1, 1, 1, 1}, 4, 16, false);
  const auto bytes = b.pixdim({1, 0.7f, 0.8f, 2.5f, 1, 1, 1, 1}).build_int16(ramp(40, -3));
  const Volume v = parse_nifti(bytes);
  CHECK(v.dims == std::array<int, 3>{4, 5, 2});
  CHECK(v.voxel_count() == 40);
  CHECK(v.datatype == NiftiDatatype::kInt16);
  CHECK(v.endianness == ByteOrder::kLittle);
  CHECK(v.pixdim[0] == doctest::Approx(0.8));
  CHECK(v.pixdim[1] == doctest::Approx(0.7));
  CHECK(v.pixdim[2] == doctest::Approx(2.5));
  // Voxel (row 2, col 3, slice 1) sits at file index 3 + 5*(2 + 4*1).
  CHECK(v.voxels[v.index(2, 3, 1)] == -3 + 3 + 5 * 6);
  CHECK(v.value(0) == -3);
}

TEST_CASE("NIfTI big endian decodes identically") {
  const auto little = parse_nifti(oracle::NiftiBuilder({3, 4, 4, 2, 1, 1, 1, 1}, 4, 16, false).build_int16(ramp(32)));
  const auto big = parse_nifti(oracle::NiftiBuilder({3, 4, 4, 2, 1, 1, 1, 1}, 4, 16, true).build_int16(ramp(32)));
  CHECK(big.endianness == ByteOrder::kBig);
  CHECK(big.voxels == little.voxels);
  CHECK(big.dims == little.dims);
}

TEST_CASE("NIfTI gzip, float32 and rescale") {
  const auto raw = oracle::NiftiBuilder({3, 4, 4, 2, 1, 1, 1, 1}, 4, 16, false).build_int16(ramp(32));
  CHECK(parse_nifti(gzip_compress(raw)).voxels == parse_nifti(raw).voxels);

  std::vector<float> f;
  for (int i = 0; i < 8; ++i) f.push_back(0.5f * i);
  const auto fv = parse_nifti(oracle::NiftiBuilder({3, 2, 2, 2, 1, 1, 1, 1}, 16, 32, true).build_float32(f));
  CHECK(fv.datatype == NiftiDatatype::kFloat32);
  CHECK(fv.voxels[7] == 3.5);

  const auto scaled = parse_nifti(oracle::NiftiBuilder({3, 2, 2, 1, 1, 1, 1, 1}, 4, 16, false)
                                      .scale(2.0f, -1000.0f)
                                      .build_int16(ramp(4, 10)));
  CHECK(scaled.value(1) == 2.0 * 11 - 1000.0);
}

TEST_CASE("NIfTI errors") {
  const oracle::NiftiBuilder good({3, 4, 4, 2, 1, 1, 1, 1}, 4, 16, false);
  auto bad_magic = oracle::NiftiBuilder(good).magic("abcd").build_int16(ramp(32));
  CHECK_ERROR_CODE(parse_nifti(bad_magic), ErrorCode::kBadMagic);

  auto truncated = good.build_int16(ramp(32));
  truncated.resize(truncated.size() - 10);
  CHECK_ERROR_CODE(parse_nifti(truncated), ErrorCode::kTruncatedData);
  CHECK_ERROR_CODE(parse_nifti(std::vector<std::uint8_t>(100, 0)), ErrorCode::kTruncatedData);

  auto gz = gzip_compress(good.build_int16(ramp(32)));
  gz.resize(gz.size() / 2);
  CHECK_ERROR_CODE(parse_nifti(gz), ErrorCode::kTruncatedData);

  const auto complex64 = oracle::NiftiBuilder({3, 4, 4, 2, 1, 1, 1, 1}, 32, 64, false).build_int16(ramp(64));
  CHECK_ERROR_CODE(parse_nifti(complex64), ErrorCode::kUnsupportedDatatype);

  auto bad_dim = oracle::NiftiBuilder({9, 4, 4, 2, 1, 1, 1, 1}, 4, 16, false).build_int16(ramp(32));
  CHECK_ERROR_CODE(parse_nifti(bad_dim), ErrorCode::kBadHeader);
}

TEST_CASE("NIfTI header/image pair") {
  const auto hdr = oracle::NiftiBuilder({3, 4, 4, 2, 1, 1, 1, 1}, 4, 16, false).magic(std::string("ni1\0", 4).c_str()).header(0.0f);
  const auto single = oracle::NiftiBuilder({3, 4, 4, 2, 1, 1, 1, 1}, 4, 16, false).build_int16(ramp(32));
  const std::vector<std::uint8_t> img(single.begin() + 352, single.end());
  const auto v = parse_nifti_pair(hdr, img);
  CHECK(v.voxels == parse_nifti(single).voxels);
}

TEST_CASE("NIfTI writer round trips") {
  Volume v;
  v.dims = {3, 5, 2};
  v.pixdim = {0.5, 0.75, 3.0};
  v.datatype = NiftiDatatype::kInt16;
  for (int i = 0; i < 30; ++i) v.voxels.push_back(i * 7 - 50);
  for (auto order : {ByteOrder::kLittle, ByteOrder::kBig}) {
    for (bool gz : {false, true}) {
      const auto back = parse_nifti(write_nifti(v, order, gz));
      CHECK(back.dims == v.dims);
      CHECK(back.voxels == v.voxels);
      CHECK(back.endianness == order);
      CHECK(back.pixdim[2] == doctest::Approx(3.0));
    }
  }
}

TEST_CASE("windowing") {
  Volume v;
  v.dims = {1, 5, 1};
  v.voxels = {-160, 40, 240, -1000, 3000};
  const auto slices = slice_and_window(v, 40, 400, "c");
  REQUIRE(slices.size() == 1);
  const auto px = slices[0].intensities();
  CHECK(px[0] == 0.0);
  CHECK(px[1] == 0.5);
  CHECK(px[2] == 1.0);
  CHECK(px[3] == 0.0);
  CHECK(px[4] == 1.0);
  CHECK(slices[0].case_id() == "c");
  CHECK_ERROR_CODE(slice_and_window(v, 40, 0), ErrorCode::kInvalidWindow);
  CHECK_ERROR_CODE(slice_and_window(v, 40, -5), ErrorCode::kInvalidWindow);
}

TEST_CASE("structure decomposition") {
  const auto ls = labels_from({
      "11..1",
      "1...1",
      "...1.",
      "22...",
  });
  // 8-connectivity joins the right column with the diagonal pixel.
  const auto liver = decompose_structures(ls, 1, 1);
  REQUIRE(liver.size() == 2);
  CHECK(liver[0].count() == 3);
  CHECK(liver[0].at(0, 0));
  CHECK(liver[1].count() == 3);
  CHECK(liver[1].at(2, 3));
  CHECK(decompose_structures(ls, 1, 4).empty());
  CHECK(decompose_structures(ls, 2, 1).size() == 1);
  CHECK(decompose_structures(ls, 5, 1).empty());
  CHECK(organ_mask(ls, 1).count() == 6);
  CHECK_ERROR_CODE(decompose_structures(ls, 0, 1), ErrorCode::kInvalidParam);
  CHECK_ERROR_CODE(decompose_structures(ls, 17, 1), ErrorCode::kInvalidParam);

  Volume lv;
  lv.dims = {4, 5, 1};
  for (auto x : ls.labels) lv.voxels.push_back(x);
  CHECK(label_slice(lv, 0).labels == ls.labels);
  CHECK_ERROR_CODE(label_slice(lv, 1), ErrorCode::kOutOfBounds);
}

TEST_CASE("phantom generation") {
  PhantomSpec spec;
  spec.height = spec.width = 48;
  spec.blobs.push_back({24, 24, 6, 12, 0.3, 0.7, 1, Structure::kLiver});
  spec.noise_std = 0.05;
  spec.seed = 11;
  const auto a = generate_phantom(spec);
  const auto b = generate_phantom(spec);
  CHECK(a.masks[0].same_pixels(b.masks[0]));
  CHECK(std::equal(a.image.intensities().begin(), a.image.intensities().end(), b.image.intensities().begin()));
  for (double x : a.image.intensities()) {
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
  }
  CHECK(a.masks[0].same_pixels(rasterize_blob(spec.blobs[0], 48, 48)));

  auto overlap = spec;
  overlap.blobs.push_back({26, 26, 5, 5, 0, 0.5, 1, Structure::kSpleen});
  CHECK_ERROR_CODE(generate_phantom(overlap), ErrorCode::kOverlapError);
  auto bad = spec;
  bad.blobs[0].radius_row = 0;
  CHECK_ERROR_CODE(generate_phantom(bad), ErrorCode::kInvalidParam);
}

TEST_CASE("two-lobe phantom: a single seed grows one lobe") {
  PhantomSpec spec;
  spec.height = spec.width = 64;
  spec.blobs.push_back({32, 32, 10, 26, 0, 0.75, 2, Structure::kLiver});
  const auto ph = generate_phantom(spec);
  const auto& gt = ph.masks[0];
  CHECK(gt.count() < rasterize_blob(spec.blobs[0], 64, 64).count());
  const auto one = reference_segment(ph.image, PointPrompt::padded(20, std::vector<PromptPoint>{{18, 32, 1}}),
                                     std::nullopt, nullptr);
  const double d = dice(one.mask, gt).value;
  CHECK(d > 0.5);
  CHECK(d < 0.75);
}

TEST_CASE("phantom corpora") {
  PhantomCorpusSpec spec;
  spec.count = 6;
  spec.size = 64;
  spec.seed = 5;
  const auto a = make_phantom_corpus(spec);
  const auto b = make_phantom_corpus(spec);
  const auto ia = a.instances();
  const auto ib = b.instances();
  REQUIRE(ia.size() == ib.size());
  CHECK(ia.size() >= 6);
  for (std::size_t i = 0; i < ia.size(); ++i) {
    CHECK(ia[i].key == ib[i].key);
    CHECK(ia[i].gt.same_pixels(ib[i].gt));
    CHECK_FALSE(ia[i].gt.empty());
  }
  for (std::size_t i = 1; i < ia.size(); ++i) {
    CHECK(std::tie(ia[i - 1].case_id, ia[i - 1].slice_index, ia[i - 1].key) <
          std::tie(ia[i].case_id, ia[i].slice_index, ia[i].key));
  }
  CHECK(a.find(ia[0].case_id, 0) != nullptr);
  CHECK(a.find("nope", 0) == nullptr);

  spec.kind = PhantomCorpusKind::kTwoLobe;
  const auto two = make_phantom_corpus(spec);
  CHECK(two.instances().size() == 6);
  spec.count = 0;
  CHECK_ERROR_CODE(make_phantom_corpus(spec), ErrorCode::kInvalidParam);
  CHECK_ERROR_CODE(load_corpus({{"phantom", {{"kind", "cubes"}}}}), ErrorCode::kCorpusError);
  CHECK_ERROR_CODE(load_corpus(nlohmann::json::object()), ErrorCode::kCorpusError);
}

TEST_CASE("manifest corpora from NIfTI files") {
  const auto dir = scratch_dir("manifest");
  // 32x32x2 image; slice 0 holds two liver components and a spleen.
  Volume img, lab;
  img.dims = lab.dims = {32, 32, 2};
  img.voxels.assign(32 * 32 * 2, -160.0);
  lab.voxels.assign(32 * 32 * 2, 0.0);
  auto paint = [&](int r0, int c0, int r1, int c1, int z, int id, double hu) {
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) {
        img.voxels[img.index(r, c, z)] = hu;
        lab.voxels[lab.index(r, c, z)] = id;
      }
  };
  paint(2, 2, 10, 10, 0, 1, 100);
  paint(20, 20, 28, 28, 0, 1, 100);
  paint(2, 20, 10, 28, 0, 2, 200);
  paint(14, 14, 15, 15, 1, 3, 200);  // below min_area
  write_file(dir / "a.nii.gz", write_nifti(img, ByteOrder::kLittle, true));
  write_file(dir / "a_seg.nii", write_nifti(lab, ByteOrder::kBig));
  std::ofstream(dir / "manifest.json") << R"({"cases":[{"id":"a","image":"a.nii.gz","labels":"a_seg.nii"}]})";

  const auto corpus = load_manifest(dir / "manifest.json");
  REQUIRE(corpus.slices().size() == 1);
  const auto inst = corpus.instances();
  REQUIRE(inst.size() == 3);
  CHECK(inst[0].key == "liver");
  CHECK(inst[1].key == "liver#1");
  CHECK(inst[2].key == "spleen");
  CHECK(inst[0].gt.count() == 81);
  CHECK(inst[0].image->at(5, 5) == doctest::Approx((100 - (40 - 200)) / 400.0));

  const auto via_config = load_corpus({{"manifest", "manifest.json"}, {"min_area", 2}}, dir);
  CHECK(via_config.slices().size() == 2);

  std::ofstream(dir / "broken.json") << R"({"cases":[{"id":"a","image":"missing.nii","labels":"a_seg.nii"}]})";
  CHECK_ERROR_CODE(load_manifest(dir / "broken.json"), ErrorCode::kCorpusError);
  std::ofstream(dir / "garbage.json") << "not json";
  CHECK_ERROR_CODE(load_manifest(dir / "garbage.json"), ErrorCode::kCorpusError);

  const auto out = dir / "out";
  fs::create_directories(out);
  write_corpus(corpus, out);
  CHECK(fs::exists(out / "a_0.png"));
  const auto bytes = read_file(out / "a_0.liver#1.json");
  const auto mask = rle_from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
  CHECK(mask.same_pixels(inst[1].gt));
  fs::remove_all(dir);
}
