#include <doctest.h>

#include <cmath>
#include <sstream>

#include "treelso/face_task.hpp"
#include "treelso/image.hpp"
#include "treelso/rng.hpp"

using namespace treelso;

TEST_CASE("generate_face determinism and validation") {
  faces::FaceParams p;
  p.degree = 3.2;
  p.seed = 77;
  const Image a = faces::generate_face(p);
  const Image b = faces::generate_face(p);
  CHECK(a.data == b.data);
  CHECK(a.height == 16);
  CHECK(a.width == 16);
  for (double v : a.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }

  faces::FaceParams bad = p;
  bad.degree = 5.5;
  CHECK_THROWS_AS((void)faces::generate_face(bad), InvalidInput);
  bad = p;
  bad.face_radius = 5.0;
  CHECK_THROWS_AS((void)faces::generate_face(bad), InvalidInput);
  bad = p;
  bad.brightness = 0.5;
  CHECK_THROWS_AS((void)faces::generate_face(bad), InvalidInput);
}

TEST_CASE("degree changes touch only the mouth region") {
  faces::FaceParams lo;
  lo.degree = 0.0;
  lo.seed = 5;
  faces::FaceParams hi = lo;
  hi.degree = 5.0;
  const Image a = faces::generate_face(lo);
  const Image b = faces::generate_face(hi);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      if (a.at(y, x, 0) != b.at(y, x, 0)) {
        CHECK(y >= 9);
        CHECK(y <= 14);
        CHECK(x >= 3);
        CHECK(x <= 12);
      }
}

TEST_CASE("scorer calibration on default nuisance") {
  for (int d = 0; d <= 5; ++d) {
    faces::FaceParams p;
    p.degree = static_cast<double>(d);
    p.seed = 1234;
    const double s = faces::score(faces::generate_face(p));
    CHECK(std::abs(s - p.degree) <= 0.25);
  }
}

TEST_CASE("scorer is monotone over the degree grid") {
  double prev = -1.0;
  for (int step = 0; step <= 10; ++step) {
    faces::FaceParams p;
    p.degree = 0.5 * step;
    p.seed = 999;
    const double s = faces::score(faces::generate_face(p));
    CHECK(s >= prev);
    prev = s;
  }
}

TEST_CASE("scorer degenerate inputs") {
  SUBCASE("all-zero image is scored without crashing") {
    const double s = faces::score(Image(16, 16, 1));
    CHECK(s >= 0.0);
    CHECK(s <= 5.0);
  }
  SUBCASE("noise image scores deterministically") {
    Rng rng(31);
    Image img(16, 16, 1);
    for (double& v : img.data) v = rng.uniform01();
    const double s1 = faces::score(img);
    const double s2 = faces::score(img);
    CHECK(s1 == s2);
    CHECK(s1 >= 0.0);
    CHECK(s1 <= 5.0);
  }
  SUBCASE("wrong shape is rejected") {
    CHECK_THROWS_AS((void)faces::score(Image(8, 8, 1)), InvalidInput);
  }
}

TEST_CASE("make_dataset") {
  SUBCASE("degree truncation keeps stored scores at or below 2.25") {
    const lso::WeightedDataset ds = faces::make_dataset(200, 2.0, 7);
    CHECK(ds.size() == 200);
    for (double s : ds.scores) CHECK(s <= 2.25);
  }
  SUBCASE("single item gets weight one") {
    const lso::WeightedDataset ds = faces::make_dataset(1, 2.0, 7);
    CHECK(ds.weights == std::vector<double>{1.0});
  }
  SUBCASE("identical seeds give identical datasets") {
    const lso::WeightedDataset a = faces::make_dataset(10, 2.0, 3);
    const lso::WeightedDataset b = faces::make_dataset(10, 2.0, 3);
    std::ostringstream sa, sb;
    write_image_container(sa, a.images);
    write_image_container(sb, b.images);
    CHECK(sa.str() == sb.str());
    CHECK(a.scores == b.scores);
  }
  SUBCASE("range variant covers high degrees") {
    const lso::WeightedDataset ds = faces::make_dataset_range(50, 3.0, 5.0, 11);
    for (double s : ds.scores) CHECK(s >= 2.75);
  }
  SUBCASE("invalid arguments are rejected") {
    CHECK_THROWS_AS((void)faces::make_dataset(0, 2.0, 1), InvalidInput);
    CHECK_THROWS_AS((void)faces::make_dataset(5, 6.0, 1), InvalidInput);
  }
}
