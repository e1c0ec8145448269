#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "vamamba/image_io.hpp"
#include "vamamba/run_config.hpp"

using namespace vamamba;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

fs::path scratch_dir() {
  fs::path d = fs::temp_directory_path() / "vamamba_test_io";
  fs::create_directories(d);
  return d;
}

ImageFile random_image(std::size_t w, std::size_t h, std::size_t c, Rng& rng) {
  ImageFile img;
  img.width = w;
  img.height = h;
  img.channels = c;
  img.pixels.resize(w * h * c);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.index(256));
  return img;
}

}  // namespace

TEST_CASE("pnm encode/decode round trip is byte-exact") {
  Rng rng(1);
  for (std::size_t c : {1u, 3u}) {
    ImageFile img = random_image(7, 5, c, rng);
    const std::string bytes = encode_pnm(img);
    CHECK(bytes.rfind(c == 3 ? "P6\n7 5\n255\n" : "P5\n7 5\n255\n", 0) == 0);
    ImageFile back = decode_pnm(bytes);
    CHECK(back.width == 7);
    CHECK(back.height == 5);
    CHECK(back.channels == c);
    CHECK(back.pixels == img.pixels);
    CHECK(encode_pnm(tensor_to_image(image_to_tensor(back))) == bytes);
  }
}

TEST_CASE("file write then read gives identical bytes") {
  Rng rng(2);
  const fs::path dir = scratch_dir();
  ImageFile img = random_image(9, 4, 3, rng);
  const std::string a = (dir / "a.ppm").string(), b = (dir / "b.ppm").string();
  write_pnm(img, a);
  Tensor t = read_image(a);
  CHECK(t.shape() == Shape{1, 3, 4, 9});
  write_image(t, b);
  CHECK(slurp(a) == slurp(b));

  ImageFile gray = random_image(6, 6, 1, rng);
  const std::string g = (dir / "g.pgm").string(), g2 = (dir / "g2.pgm").string();
  write_pnm(gray, g);
  Tensor tg = read_image(g);
  CHECK(tg.shape() == Shape{1, 3, 6, 6});
  write_image(tg, g2, true);
  CHECK(slurp(g) == slurp(g2));
}

TEST_CASE("header parsing: comments, whitespace and errors") {
  const std::string body(6, '\x10');
  ImageFile c = decode_pnm("P5\n# a comment\n3 2\n# another\n255\n" + body);
  CHECK(c.width == 3);
  CHECK(c.pixels.size() == 6);
  ImageFile ws = decode_pnm("P5 3  2\t255\n" + body);
  CHECK(ws.height == 2);

  try {
    decode_pnm("P7\n3 2\n255\n" + body);
    FAIL("expected an error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("unsupported magic") != std::string::npos);
  }
  CHECK_THROWS_AS(decode_pnm("P5\n3 2\n255\n" + body.substr(0, 5)), IoError);
  CHECK_THROWS_AS(decode_pnm("P5\n3 x\n255\n" + body), IoError);
  CHECK_THROWS_AS(decode_pnm("P5\n3 2\n65535\n" + body), IoError);
  CHECK_THROWS_AS(decode_pnm(""), IoError);
  CHECK_THROWS_AS(read_image("/nonexistent/dir/img.ppm"), IoError);
}

TEST_CASE("quantization clamps and rounds") {
  Tensor t({1, 1, 1, 5}, std::vector<double>{1.0, 0.0, -0.3, 1.7, 0.5});
  ImageFile img = tensor_to_image(t);
  CHECK(img.channels == 1);
  CHECK(img.pixels == std::vector<std::uint8_t>{255, 0, 0, 255, 128});
  ImageFile back = tensor_to_image(image_to_tensor(img));
  CHECK(back.pixels == img.pixels);
}

TEST_CASE("run config parsing") {
  const std::string text =
      "# comment line\n"
      "model.channels = 8   # trailing comment\n"
      "model.lora_rank=2\n"
      "\n"
      "train.steps = 12\n"
      "train.sigma255 = 25\n"
      "checkpoint.dtype = f32\n";
  RunConfig c = parse_run_config(text, "t.cfg");
  CHECK(c.model.channels == 8);
  CHECK(c.model.lora_rank == 2);
  CHECK(c.train.total_steps == 12);
  CHECK(c.train.sigma == doctest::Approx(25.0 / 255.0));
  CHECK(c.checkpoint_dtype == CheckpointDtype::f32);

  RunConfig again = parse_run_config(c.to_text());
  CHECK(again.to_text() == c.to_text());

  try {
    parse_run_config("model.channels = 8\nmodel.colour = 3\n", "t.cfg");
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("t.cfg:2") != std::string::npos);
    CHECK(std::string(e.what()).find("model.colour") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_run_config("model.channels 8\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("train.steps = -3\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("model.path_mode = spiral\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("checkpoint.dtype = f16\n"), ConfigError);
}

TEST_CASE("run config validation happens before any run") {
  RunConfig c;
  c.train.crop = 18;  // not a multiple of the patch size
  CHECK_THROWS_AS(c.validate(), ConfigError);
  RunConfig g;
  g.train.crop = 128;  // grid larger than the positional table
  CHECK_THROWS_AS(g.validate(), ConfigError);
  RunConfig r;
  r.model.lora_rank = r.model.channels;
  CHECK_THROWS_AS(r.validate(), ConfigError);
}

TEST_CASE("shipped desk config loads and validates") {
  RunConfig c = load_run_config(VAMAMBA_SOURCE_DIR "/configs/desk.cfg");
  c.validate();
  CHECK(c.train.total_steps == 300);
  CHECK(c.train.batch == 4);
  CHECK(c.train.crop == 16);
  CHECK(c.train.lambda_fft == 0.05);
  CHECK(c.model.cache_capacity == 5);
  CHECK_THROWS_AS(load_run_config("/nonexistent.cfg"), IoError);
}
