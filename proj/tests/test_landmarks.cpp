#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <string>

#include "doctest.h"
#include "patchbmi/landmarks.hpp"
#include "support/fixtures.hpp"

using namespace patchbmi;
using namespace patchbmi::test;

namespace {

std::string n_lines(int n) {
  std::string s;
  for (int i = 0; i < n; ++i) s += std::to_string(i) + " " + std::to_string(i * 2) + "\n";
  return s;
}

}  // namespace

TEST_CASE("parse_landmarks accepts exactly 68 x-y lines") {
  const LandmarkSet lm = parse_landmarks(n_lines(68));
  CHECK(lm.pts[0].x == 0.0);
  CHECK(lm.pts[67].x == 67.0);
  CHECK(lm.pts[67].y == 134.0);

  // fractional coordinates, CRLF, and stray blank lines are all fine
  std::string txt = "1.5 -2.25\r\n";
  for (int i = 1; i < 68; ++i) txt += "3 4\n\n";
  const LandmarkSet lm2 = parse_landmarks(txt);
  CHECK(lm2.pts[0].x == 1.5);
  CHECK(lm2.pts[0].y == -2.25);
}

TEST_CASE("parse_landmarks rejects malformed input") {
  CHECK_THROWS_WITH_AS(parse_landmarks(n_lines(67)), doctest::Contains("67"), ValidationError);
  CHECK_THROWS_AS(parse_landmarks(n_lines(69)), ValidationError);
  std::string bad = n_lines(40) + "12.5 abc\n" + n_lines(27);
  CHECK_THROWS_WITH_AS(parse_landmarks(bad), doctest::Contains("line 41"), ValidationError);
  std::string onecol = n_lines(67) + "5\n";
  CHECK_THROWS_AS(parse_landmarks(onecol), ValidationError);
  std::string inf = n_lines(67) + "inf 3\n";
  CHECK_THROWS_AS(parse_landmarks(inf), ValidationError);
}

TEST_CASE("landmark file round trip") {
  TempDir tmp;
  const LandmarkSet lm = canonical_landmarks(224, 224);
  write_text(tmp / "lm.txt", format_landmarks(lm));
  const LandmarkSet back = read_landmarks_file(tmp / "lm.txt");
  for (int i = 0; i < kNumLandmarks; ++i) {
    CHECK(back.pts[i].x == doctest::Approx(lm.pts[i].x).epsilon(1e-5));
    CHECK(back.pts[i].y == doctest::Approx(lm.pts[i].y).epsilon(1e-5));
  }
  CHECK_THROWS_WITH_AS(read_landmarks_file(tmp / "nope.txt"), doctest::Contains("nope.txt"),
                       ValidationError);
}

TEST_CASE("rescale follows the resize sampling grid") {
  LandmarkSet lm;
  lm.pts[0] = {10.0, 20.0};
  const LandmarkSet out = rescale_landmarks(lm, 100, 200, 50, 50);
  CHECK(out.pts[0].x == doctest::Approx((10.0 + 0.5) * 0.5 - 0.5));
  CHECK(out.pts[0].y == doctest::Approx((20.0 + 0.5) * 0.25 - 0.5));

  // identity when sizes match
  const LandmarkSet same = rescale_landmarks(lm, 100, 200, 100, 200);
  CHECK(same.pts[0].x == 10.0);
  CHECK(same.pts[0].y == 20.0);
}

TEST_CASE("augment transform moves landmarks with the image") {
  LandmarkSet lm;
  lm.pts[0] = {10.0, 30.0};
  const AugmentParams flip{true, 0.0};
  const LandmarkSet flipped = apply_augment(lm, flip, 100, 80);
  CHECK(flipped.pts[0].x == doctest::Approx(89.0));  // (w-1) - x
  CHECK(flipped.pts[0].y == 30.0);

  const AugmentParams rot{false, 180.0};
  const LandmarkSet turned = apply_augment(lm, rot, 100, 80);
  CHECK(turned.pts[0].x == doctest::Approx(89.0).epsilon(1e-9));   // 2*49.5 - 10
  CHECK(turned.pts[0].y == doctest::Approx(49.0).epsilon(1e-9));   // 2*39.5 - 30
}

TEST_CASE("default rule table covers the six regions and spares the nose") {
  const RuleTable rules = default_rule_table();
  REQUIRE(rules.size() == 6);
  for (int r = 0; r < kNumRegions; ++r) CHECK(rules[r].name == kRegionNames[r]);
  for (const auto& rule : rules) {
    CHECK(rule.anchor_a >= 0);
    CHECK(rule.anchor_a < kNumLandmarks);
    CHECK(rule.anchor_b >= 0);
    CHECK(rule.anchor_b < kNumLandmarks);
    // the nose block 27..35 stays untouched
    CHECK_FALSE((rule.anchor_a >= 27 && rule.anchor_a <= 35));
    CHECK_FALSE((rule.anchor_b >= 27 && rule.anchor_b <= 35));
  }
  CHECK(rules[0].vertical == VerticalMode::kExtendUp);
  for (int r = 1; r < kNumRegions; ++r) CHECK(rules[r].vertical == VerticalMode::kSpan);
}

TEST_CASE("roi_from_rule span boxes") {
  LandmarkSet lm;
  SUBCASE("chin box is the untouched anchor bounding box at pad 0") {
    lm.pts[2] = {40.0, 120.0};
    lm.pts[8] = {100.0, 200.0};
    const RoiRule rule{"chin", 2, 8, 0.0, VerticalMode::kSpan, 0.5};
    const Box box = roi_from_rule(rule, lm, 224, 224);
    CHECK(box.x0 == 40);
    CHECK(box.y0 == 120);
    CHECK(box.x1 == 100);
    CHECK(box.y1 == 200);
  }
  SUBCASE("padding widens both axes by the per-axis span fraction") {
    lm.pts[36] = {70.0, 100.0};
    lm.pts[39] = {100.0, 96.0};
    const RoiRule rule{"left_eye", 36, 39, 0.15, VerticalMode::kSpan, 0.5};
    const Box box = roi_from_rule(rule, lm, 224, 224);
    CHECK(box.x0 == 65);   // floor(70 - 4.5)
    CHECK(box.y0 == 95);   // floor(96 - 0.6)
    CHECK(box.x1 == 105);  // ceil(100 + 4.5)
    CHECK(box.y1 == 101);  // ceil(100 + 0.6)
  }
  SUBCASE("boxes clip to the frame") {
    lm.pts[2] = {-30.0, -10.0};
    lm.pts[8] = {500.0, 300.0};
    const RoiRule rule{"chin", 2, 8, 0.15, VerticalMode::kSpan, 0.5};
    const Box box = roi_from_rule(rule, lm, 224, 224);
    CHECK(box.x0 == 0);
    CHECK(box.y0 == 0);
    CHECK(box.x1 == 224);
    CHECK(box.y1 == 224);
  }
}

TEST_CASE("forehead extends upward from the brow line") {
  LandmarkSet lm;
  lm.pts[18] = {50.0, 80.0};
  lm.pts[25] = {150.0, 78.0};
  const RoiRule rule{"forehead", 18, 25, 0.0, VerticalMode::kExtendUp, 0.5};
  const Box box = roi_from_rule(rule, lm, 224, 224);
  CHECK(box.x0 == 50);
  CHECK(box.x1 == 150);
  CHECK(box.y0 == 28);  // y_top 78 minus half the 100px x-span
  CHECK(box.y1 == 78);

  // pushing the anchors to the frame top clips the extension
  lm.pts[18] = {50.0, 20.0};
  lm.pts[25] = {150.0, 22.0};
  const Box clipped = roi_from_rule(rule, lm, 224, 224);
  CHECK(clipped.y0 == 0);
  CHECK(clipped.y1 == 20);
}

TEST_CASE("roi_from_rule rejects bad rules and degenerate boxes") {
  LandmarkSet lm;
  lm.pts[5] = {50.0, 50.0};
  const RoiRule out_of_range{"x", 5, 99, 0.15, VerticalMode::kSpan, 0.5};
  CHECK_THROWS_AS(roi_from_rule(out_of_range, lm, 224, 224), ValidationError);
  const RoiRule negative_pad{"x", 5, 6, -0.1, VerticalMode::kSpan, 0.5};
  CHECK_THROWS_AS(roi_from_rule(negative_pad, lm, 224, 224), ValidationError);

  // coincident anchors at integer coordinates collapse to zero area
  lm.pts[6] = {50.0, 50.0};
  const RoiRule degen{"left_cheek", 5, 6, 0.0, VerticalMode::kSpan, 0.5};
  CHECK_THROWS_WITH_AS(roi_from_rule(degen, lm, 224, 224), doctest::Contains("degenerate ROI"),
                       ProcessingError);
  CHECK_THROWS_WITH_AS(roi_from_rule(degen, lm, 224, 224), doctest::Contains("left_cheek"),
                       ProcessingError);

  // anchors entirely outside the frame clip to nothing
  lm.pts[5] = {-50.0, 30.0};
  lm.pts[6] = {-20.0, 60.0};
  const RoiRule outside{"chin", 5, 6, 0.0, VerticalMode::kSpan, 0.5};
  CHECK_THROWS_AS(roi_from_rule(outside, lm, 224, 224), ProcessingError);
}

TEST_CASE("roi boxes always land inside the frame") {
  std::mt19937 rng(55);
  const RuleTable rules = default_rule_table();
  for (int trial = 0; trial < 200; ++trial) {
    LandmarkSet lm;
    for (auto& p : lm.pts) {
      p.x = uniform_range(rng, -100.0, 324.0);
      p.y = uniform_range(rng, -100.0, 324.0);
    }
    for (const auto& rule : rules) {
      try {
        const Box box = roi_from_rule(rule, lm, 224, 160);
        CHECK(box.x0 >= 0);
        CHECK(box.y0 >= 0);
        CHECK(box.x1 <= 224);
        CHECK(box.y1 <= 160);
        CHECK(box.x0 < box.x1);
        CHECK(box.y0 < box.y1);
      } catch (const ProcessingError&) {
        // degenerate draws are expected with landmarks this wild
      }
    }
  }
}

TEST_CASE("extract_patch_image resamples the crop") {
  Image img = make_image(64, 64, 1);
  for (auto& p : img.pixels) p = 128;
  const Box box{8, 8, 40, 24};
  const Image patch = extract_patch_image(img, box, 32);
  CHECK(patch.width == 32);
  CHECK(patch.height == 32);
  for (auto p : patch.pixels) CHECK(p == 128);

  // a crop that is already 32x32 passes through untouched
  Image exact = face_image(32, 32, 9);
  const Image same = extract_patch_image(exact, Box{0, 0, 32, 32}, 32);
  CHECK(same.pixels == exact.pixels);

  Image rgb = make_image(64, 64, 3);
  CHECK_THROWS_AS(extract_patch_image(rgb, box, 32), ValidationError);
}

TEST_CASE("extract_patch replicates gray into three unit-range channels") {
  Image img = make_image(48, 48, 1);
  for (auto& p : img.pixels) p = 51;
  const Tensor t = extract_patch(img, Box{4, 4, 44, 44}, 32);
  REQUIRE(t.shape() == std::vector<int>{3, 32, 32});
  for (float v : t.data()) CHECK(v == doctest::Approx(0.2f));
}

TEST_CASE("extract_all_patches produces the canonical set") {
  const int side = 224;
  const LandmarkSet lm = canonical_landmarks(side, side);
  Image img = face_image(side, side, 31);
  const RuleTable rules = default_rule_table();
  const PatchSet set = extract_all_patches(img, lm, rules, 32);
  for (int r = 0; r < kNumRegions; ++r) {
    CHECK(set.patches[r].shape() == std::vector<int>{3, 32, 32});
    const Box expect = roi_from_rule(rules[r], lm, side, side);
    CHECK(set.boxes[r].x0 == expect.x0);
    CHECK(set.boxes[r].y0 == expect.y0);
    CHECK(set.boxes[r].x1 == expect.x1);
    CHECK(set.boxes[r].y1 == expect.y1);
  }
  // boxes differ region to region
  CHECK(set.boxes[0].y0 != set.boxes[5].y0);

  // rules are data: swapping the table moves the boxes without code changes
  RuleTable alt = rules;
  alt[5].pad_frac = 0.4;
  const PatchSet moved = extract_all_patches(img, lm, alt, 32);
  CHECK(moved.boxes[5].x0 < set.boxes[5].x0);

  // a degenerate region rejects the whole sample, naming the region
  RuleTable broken = rules;
  broken[1].anchor_a = broken[1].anchor_b = 36;
  LandmarkSet pinned = lm;
  pinned.pts[36] = {50.0, 50.0};
  CHECK_THROWS_WITH_AS(extract_all_patches(img, pinned, broken, 32),
                       doctest::Contains("left_eye"), ProcessingError);
}
