#include <random>

#include "gazeseg/codec.hpp"
#include "gazeseg/core.hpp"
#include "gazeseg/metrics.hpp"
#include "gazeseg/rle.hpp"
#include "gazeseg/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gazeseg;

namespace {

Mask square(int h, int w, int r0, int c0, int side) {
  Mask m(h, w);
  for (int r = r0; r < r0 + side; ++r)
    for (int c = c0; c < c0 + side; ++c) m.set(r, c);
  return m;
}

}  // namespace

TEST_CASE("structure names map to WORD label ids") {
  CHECK(structure_name(Structure::kLiver) == "liver");
  CHECK(label_id(Structure::kHeadOfFemurRight) == 16);
  CHECK(structure_from_label_id(5) == Structure::kStomach);
  CHECK_FALSE(structure_from_label_id(0).has_value());
  CHECK_FALSE(structure_from_label_id(17).has_value());
  CHECK(parse_structure("kidney_left") == Structure::kKidneyLeft);
  CHECK_FALSE(parse_structure("brain").has_value());
}

TEST_CASE("round_coord sends exact halves to the lower index") {
  CHECK(round_coord(2.5) == 2);
  CHECK(round_coord(2.5000001) == 3);
  CHECK(round_coord(2.49) == 2);
  CHECK(round_coord(-0.5) == -1);
  CHECK(round_coord(0.0) == 0);
}

TEST_CASE("image slices validate their payload") {
  CHECK_ERROR_CODE(ImageSlice(2, 2, {0.1, 0.2, 0.3}), ErrorCode::kInvalidParam);
  CHECK_ERROR_CODE(ImageSlice(1, 1, {1.5}), ErrorCode::kInvalidParam);
  const auto img = ImageSlice::filled(3, 4, 0.25);
  CHECK(img.at(2, 3) == 0.25);
  CHECK(img.contains(2, 3));
  CHECK_FALSE(img.contains(3, 0));
}

TEST_CASE("mask_difference") {
  SUBCASE("identical masks give an empty difference") {
    const auto a = square(8, 8, 2, 2, 3);
    CHECK(mask_difference(a, a).empty());
  }
  SUBCASE("empty prediction keeps every reference pixel") {
    Mask ref(5, 5);
    for (int i = 0; i < 7; ++i) ref.set(i / 5, i % 5);
    const auto d = mask_difference(Mask(5, 5), ref);
    CHECK(d.count() == 7);
    CHECK(d.same_pixels(ref));
  }
  SUBCASE("shifted 3x3 square matches the pixelwise XOR") {
    const auto ref = square(8, 8, 2, 2, 3);
    const auto pred = square(8, 8, 2, 3, 3);
    const auto d = mask_difference(pred, ref);
    CHECK(d.count() == 6);
    CHECK(d.same_pixels(oracle::xor_masks(pred, ref)));
  }
  SUBCASE("label comes from the reference") {
    Mask ref(2, 2, Structure::kSpleen);
    CHECK(mask_difference(Mask(2, 2), ref).structure() == Structure::kSpleen);
  }
  CHECK_ERROR_CODE(mask_difference(Mask(2, 2), Mask(2, 3)), ErrorCode::kShapeMismatch);
}

TEST_CASE("region_membership priority") {
  Mask gt(4, 4);
  gt.set(1, 1);
  gt.set(1, 2);
  Mask diff(4, 4);
  diff.set(1, 2);
  diff.set(3, 3);
  CHECK(region_membership({1.0, 1.0}, gt, diff) == Region::kGroundTruth);
  CHECK(region_membership({2.0, 1.0}, gt, diff) == Region::kDifference);
  CHECK(region_membership({3.0, 3.0}, gt, diff) == Region::kDifference);
  CHECK(region_membership({0.0, 0.0}, gt, diff) == Region::kOutside);
  // (x, y) = (1.4, 0.6) rounds to row 1, col 1.
  CHECK(region_membership({1.4, 0.6}, gt, diff) == Region::kGroundTruth);
  CHECK_ERROR_CODE(region_membership({4.0, 0.0}, gt, diff), ErrorCode::kOutOfBounds);
  CHECK_ERROR_CODE(region_membership({-0.6, 0.0}, gt, diff), ErrorCode::kOutOfBounds);
}

TEST_CASE("PointPrompt padding") {
  const std::vector<PromptPoint> live{{1, 2, 1}, {3, 4, 0}};
  const auto p = PointPrompt::padded(5, live);
  CHECK(p.capacity() == 5);
  CHECK(p.live_count() == 2);
  CHECK(p.points()[2] == PromptPoint{0, 0, -1});
  CHECK(p.points()[4] == PromptPoint{0, 0, -1});
  CHECK(p.has_foreground());
  CHECK_ERROR_CODE(PointPrompt::padded(0, {}), ErrorCode::kInvalidParam);
  CHECK_ERROR_CODE(PointPrompt::padded(51, {}), ErrorCode::kInvalidParam);
  CHECK_ERROR_CODE(PointPrompt::padded(1, live), ErrorCode::kInvalidParam);
  const std::vector<PromptPoint> bad{{1, 1, 2}};
  CHECK_ERROR_CODE(PointPrompt::padded(3, bad), ErrorCode::kInvalidParam);
  const std::vector<PromptPoint> padding_in_live{{1, 1, -1}};
  CHECK_ERROR_CODE(PointPrompt::padded(3, padding_in_live), ErrorCode::kInvalidParam);
}

TEST_CASE("dice") {
  const auto a = square(6, 6, 1, 1, 2);
  CHECK(dice(a, a).value == 1.0);
  CHECK(dice(a, square(6, 6, 4, 4, 2)).value == 0.0);
  CHECK(dice(Mask(3, 3), Mask(3, 3)).value == 1.0);
  Mask b(6, 6);
  b.set(1, 1);
  b.set(1, 2);
  // |a| = 4, |b| = 2, overlap 2: 4 / 6.
  CHECK(dice(a, b).value == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(dice(a, b).value == oracle::dice(a, b));
  CHECK_ERROR_CODE(dice(Mask(2, 2), Mask(3, 2)), ErrorCode::kShapeMismatch);
}

TEST_CASE("aggregate uses the population deviation") {
  const std::vector<double> same{0.5, 0.5};
  CHECK(aggregate(same).mean == 0.5);
  CHECK(aggregate(same).std == 0.0);
  const std::vector<double> spread{0.0, 1.0};
  CHECK(aggregate(spread).mean == 0.5);
  CHECK(aggregate(spread).std == 0.5);
  const std::vector<double> one{0.73};
  CHECK(aggregate(one).mean == 0.73);
  CHECK(aggregate(one).std == 0.0);
  CHECK(aggregate(one).n == 1);
  CHECK_ERROR_CODE(aggregate(std::vector<double>{}), ErrorCode::kEmptyInput);
}

TEST_CASE("RLE encoding") {
  Mask m(2, 3);
  m.set(0, 1);
  m.set(0, 2);
  m.set(1, 2);
  CHECK(rle_encode(m) == std::vector<std::uint64_t>{1, 2, 2, 1});
  Mask first(1, 2);
  first.set(0, 0);
  CHECK(rle_encode(first) == std::vector<std::uint64_t>{0, 1, 1});
  CHECK(rle_decode(2, 3, {1, 2, 2, 1}).same_pixels(m));
  CHECK_ERROR_CODE(rle_decode(2, 3, {1, 2}), ErrorCode::kProtocolError);
  CHECK_ERROR_CODE(rle_decode(2, 3, {7}), ErrorCode::kProtocolError);
  const auto j = rle_to_json(m);
  CHECK(j.dump() == R"({"rle":[1,2,2,1],"size":[2,3]})");
  CHECK(rle_from_json(j).same_pixels(m));
  CHECK_ERROR_CODE(rle_from_json(nlohmann::json{{"size", {2}}, {"rle", {6}}}), ErrorCode::kProtocolError);
  CHECK_ERROR_CODE(rle_from_json(nlohmann::json{{"size", {2, 3}}, {"rle", {-1, 7}}}), ErrorCode::kProtocolError);
}

TEST_CASE("RLE round trip on random masks") {
  std::mt19937_64 g(3);
  for (int i = 0; i < 50; ++i) {
    const auto m = oracle::random_mask(g, 1 + static_cast<int>(g() % 20), 1 + static_cast<int>(g() % 20), 0.4);
    const auto runs = rle_encode(m);
    std::uint64_t sum = 0;
    for (auto r : runs) sum += r;
    CHECK(sum == m.size());
    CHECK(rle_decode(m.height(), m.width(), runs).same_pixels(m));
  }
}

TEST_CASE("base64 matches RFC 4648 vectors") {
  auto enc = [](std::string s) {
    return base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  };
  CHECK(enc("") == "");
  CHECK(enc("f") == "Zg==");
  CHECK(enc("fo") == "Zm8=");
  CHECK(enc("foo") == "Zm9v");
  CHECK(enc("foobar") == "Zm9vYmFy");
  const auto back = base64_decode("Zm9vYmE=");
  CHECK(std::string(back.begin(), back.end()) == "fooba");
  CHECK_ERROR_CODE(base64_decode("Zm9v!"), ErrorCode::kProtocolError);
}

TEST_CASE("PNG gray8 round trip") {
  GrayImage8 img{3, 4, {0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 255}};
  const auto png = png_encode_gray8(img);
  CHECK(png.size() > 8);
  const auto back = png_decode_gray8(png);
  CHECK(back.height == 3);
  CHECK(back.width == 4);
  CHECK(back.pixels == img.pixels);
  CHECK_ERROR_CODE(png_decode_gray8(std::vector<std::uint8_t>{1, 2, 3}), ErrorCode::kProtocolError);
  const std::vector<double> vals{0.0, 0.5, 1.0};
  CHECK(to_gray8(1, 3, vals).pixels == std::vector<std::uint8_t>{0, 128, 255});
}

TEST_CASE("gzip round trip and corruption") {
  std::vector<std::uint8_t> data(1000);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<std::uint8_t>(i * 7);
  const auto gz = gzip_compress(data);
  CHECK(is_gzip(gz));
  CHECK_FALSE(is_gzip(data));
  CHECK(gzip_decompress(gz) == data);
  const std::vector<std::uint8_t> cut(gz.begin(), gz.begin() + static_cast<std::ptrdiff_t>(gz.size() / 2));
  CHECK_ERROR_CODE(gzip_decompress(cut), ErrorCode::kTruncatedData);
}

TEST_CASE("seed derivation is stable and stream-separated") {
  const auto a = derive_seed(7, "case001", "liver", 0);
  CHECK(a == derive_seed(7, "case001", "liver", 0));
  CHECK(a != derive_seed(8, "case001", "liver", 0));
  CHECK(a != derive_seed(7, "case002", "liver", 0));
  CHECK(a != derive_seed(7, "case001", "spleen", 0));
  CHECK(a != derive_seed(7, "case001", "liver", 1));
  CHECK(a != derive_seed(7, "case001", "liver", 0, SeedStream::kStrategy));
  // Concatenation ambiguity: ("ab","c") must differ from ("a","bc").
  CHECK(derive_seed(1, "ab", "c", 0) != derive_seed(1, "a", "bc", 0));
}

TEST_CASE("sample_without_replacement") {
  Rng rng(5);
  for (std::size_t n : {1u, 5u, 100u, 10000u}) {
    for (std::size_t k : {std::size_t{0}, std::size_t{1}, n / 2, n}) {
      const auto picks = sample_without_replacement(rng, n, k);
      CHECK(picks.size() == k);
      std::set<std::size_t> uniq(picks.begin(), picks.end());
      CHECK(uniq.size() == k);
      for (auto p : picks) CHECK(p < n);
    }
  }
  Rng a(9), b(9);
  CHECK(sample_without_replacement(a, 50, 10) == sample_without_replacement(b, 50, 10));
}

TEST_CASE("sample_without_replacement is uniform over positions") {
  // Each index of n=10 chosen with probability k/n = 0.3.
  Rng rng(21);
  std::array<int, 10> hits{};
  const int trials = 20000;
  for (int t = 0; t < trials; ++t)
    for (auto i : sample_without_replacement(rng, 10, 3)) ++hits[i];
  for (int h : hits) CHECK(std::abs(h / double(trials) - 0.3) < 0.02);
}
