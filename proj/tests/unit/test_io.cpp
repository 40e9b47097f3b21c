#include <doctest.h>

#include <fstream>

#include "scg/config.hpp"
#include "scg/dataset.hpp"
#include "scg/error.hpp"
#include "scg/image_io.hpp"
#include "scg/synthetic.hpp"
#include "test_util.hpp"

using namespace scg;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

// Synthetic dataset of `count` pairs at `size`, written through write_png.
std::vector<SyntheticItem> write_dataset(const fs::path& root, std::size_t count, std::size_t size) {
  SyntheticDomainSpec spec;
  spec.image_size = size;
  spec.seed = 4;
  const auto items = gen_synthetic_domains(spec, count);
  fs::create_directories(root / "photos");
  fs::create_directories(root / "sketches");
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string stem = "s" + std::to_string(i);
    write_png(root / "photos" / (stem + ".png"), items[i].photo);
    write_png(root / "sketches" / (stem + ".png"), items[i].sketch);
  }
  return items;
}

}  // namespace

TEST_CASE("pixel mapping endpoints and rounding") {
  CHECK(byte_to_unit(0) == -1.0);
  CHECK(byte_to_unit(255) == 1.0);
  for (int b = 0; b < 256; ++b) CHECK(unit_to_byte(byte_to_unit(static_cast<std::uint8_t>(b))) == b);
  CHECK(unit_to_byte(3.0) == 255);
  CHECK(unit_to_byte(-3.0) == 0);
  CHECK(unit_to_byte(std::nan("")) == 0);
}

TEST_CASE("8-bit PNG round trip is lossless for gray and RGB") {
  const fs::path dir = testing::temp_dir("png");
  for (std::size_t channels : {1u, 3u}) {
    Raster r{7, 5, channels, {}};
    for (std::size_t i = 0; i < 7 * 5 * channels; ++i) r.pixels.push_back(static_cast<std::uint8_t>((i * 37) % 256));
    const fs::path p = dir / ("img" + std::to_string(channels) + ".png");
    write_png_raster(p, r);
    const Raster back = read_png_raster(p);
    CHECK(back.width == 7);
    CHECK(back.height == 5);
    CHECK(back.channels == channels);
    CHECK(back.pixels == r.pixels);

    const Tensor t = read_png(p);
    CHECK(t.shape() == Shape{channels, 5, 7});
    write_png(dir / "again.png", t);
    CHECK(read_png_raster(dir / "again.png").pixels == r.pixels);
  }
}

TEST_CASE("PNG errors") {
  const fs::path dir = testing::temp_dir("png_err");
  CHECK_THROWS_AS(read_png(dir / "missing.png"), IoError);
  write_text(dir / "junk.png", "not a png");
  CHECK_THROWS_AS(read_png(dir / "junk.png"), IoError);
  CHECK_THROWS_AS(write_png(dir / "x.png", Tensor::zeros({2, 4, 4})), DimensionError);
}

TEST_CASE("hconcat replicates gray next to colour") {
  const Tensor gray = Tensor::full({1, 2, 2}, 0.5), rgb = Tensor::full({3, 2, 3}, -0.25);
  const Tensor out = hconcat_images({gray, rgb});
  CHECK(out.shape() == Shape{3, 2, 5});
  CHECK(out.at({2, 1, 1}) == 0.5);
  CHECK(out.at({0, 0, 4}) == -0.25);
  CHECK(hconcat_images({gray, gray}).shape() == Shape{1, 2, 4});
  CHECK_THROWS(hconcat_images({gray, Tensor::zeros({1, 3, 2})}));
}

TEST_CASE("config text round-trips every field") {
  TrainConfig c;
  c.epochs = 7;
  c.decay_start_epoch = 3;
  c.lr_g = 0.00123;
  c.weights.lambda_sty = 0.0;
  c.noise_pixels = 12.5;
  c.loss_levels = {3, 5};
  c.seed = 123456789012345ULL;
  c.generator.width = 12;
  c.float32_storage = false;
  const std::string text = serialize_train_config(c);
  const TrainConfig back = parse_train_config(text);
  CHECK(serialize_train_config(back) == text);
  CHECK(back.lr_g == c.lr_g);
  CHECK(back.seed == c.seed);
  CHECK(back.loss_levels == c.loss_levels);
  CHECK(back.float32_storage == false);
}

TEST_CASE("default config serializes to the published hyperparameters") {
  const TrainConfig c = parse_train_config(serialize_train_config(TrainConfig{}));
  CHECK(c.lr_g == 0.001);
  CHECK(c.lr_d == 0.004);
  CHECK(c.batch_size == 2);
  CHECK(c.noise_pixels == 20.0);
  CHECK(c.k == 3);
  CHECK(c.candidates == 3);
  CHECK(c.weights.lambda_p == 1.0);
  CHECK(c.weights.lambda_sty == 1.0);
  CHECK(c.weights.lambda_cyc == 1.0);
  CHECK(c.weights.lambda_adv == 1.0);
  const std::string text = serialize_train_config(TrainConfig{});
  CHECK(text.find("lr_d = 0.004\n") != std::string::npos);
  CHECK(text.find("noise_sigma = 20\n") != std::string::npos);
}

TEST_CASE("config parsing errors name the line") {
  auto message = [](const std::string& text) {
    try {
      parse_train_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message("# comment\n\nepochs = 3\nfoo = 1\n").find("line 4: unknown key 'foo'") != std::string::npos);
  CHECK(message("k = 3\nk = 5\n").find("line 2") != std::string::npos);
  CHECK(message("k 3\n").find("line 1") != std::string::npos);
  CHECK(message("lr_g = fast\n").find("line 1") != std::string::npos);
  CHECK(message("lr_g =\n").find("line 1") != std::string::npos);
  CHECK(message("batch_size = 0\n") != "no error");
  CHECK(message("epochs = 4\ndecay_start_epoch = 9\n") != "no error");
  CHECK(message("epochs = 20\n# trailing\n") == "no error");
}

TEST_CASE("dataset layout pairs by stem and reads the manifest") {
  const fs::path root = testing::temp_dir("dataset_ok");
  const auto items = write_dataset(root, 4, 16);
  fs::remove(root / "sketches" / "s3.png");  // photo-only entry
  write_text(root / "manifest.tsv", "s0\ttrain\ns1\ttest\n");

  const DatasetLayout layout = DatasetLayout::open(root);
  CHECK(layout.entries().size() == 4);
  CHECK(layout.height() == 16);
  const auto train = layout.load_pairs("train");
  REQUIRE(train.size() == 2);
  CHECK(train[0].id == "s0");
  CHECK(train[1].id == "s2");  // not in the manifest, defaults to train
  CHECK(train[0].photo.shape() == Shape{3, 16, 16});
  CHECK(train[0].sketch.shape() == Shape{1, 16, 16});
  CHECK(testing::max_abs_diff(train[0].sketch.data(), items[0].sketch.data()) == 0.0);
  CHECK(layout.load_pairs("test").size() == 1);
  CHECK(layout.load_pairs("").size() == 3);
  const auto extra = layout.load_unpaired_photos("train");
  REQUIRE(extra.size() == 1);
  CHECK(extra[0].id == "s3");
  CHECK(layout.load_photos("").size() == 4);
}

TEST_CASE("dataset problems are itemized") {
  const fs::path root = testing::temp_dir("dataset_bad");
  write_dataset(root, 3, 16);
  // Orphan sketch, size mismatch and an unknown manifest stem at once.
  fs::rename(root / "photos" / "s0.png", root / "photos" / "other.png");
  SyntheticDomainSpec big;
  big.image_size = 24;
  write_png(root / "photos" / "s1.png", make_synthetic_item(big, 0).photo);
  write_text(root / "manifest.tsv", "ghost\ttest\n");
  try {
    DatasetLayout::open(root);
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("s0") != std::string::npos);
    CHECK(msg.find("s1") != std::string::npos);
    CHECK(msg.find("ghost") != std::string::npos);
  }

  const fs::path no_sketches = testing::temp_dir("dataset_nosk");
  fs::create_directories(no_sketches / "photos");
  write_png(no_sketches / "photos" / "a.png", Tensor::zeros({3, 8, 8}));
  CHECK_THROWS_AS(DatasetLayout::open(no_sketches), DatasetError);
  CHECK(DatasetLayout::open(no_sketches, false).entries().size() == 1);
  CHECK_THROWS_AS(DatasetLayout::open(testing::temp_dir("dataset_empty")), DatasetError);
}
