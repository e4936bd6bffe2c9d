#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "qclass/container.hpp"

using namespace qclass;

TEST(Bytes, RoundTrip) {
  ByteWriter w;
  w.put_u8(7);
  w.put_u32(0xdeadbeef);
  w.put_u64(1ULL << 40);
  w.put_f64(-0.125);
  w.put_string("কে");
  const std::vector<double> xs{1.5, -2.0, 3e-300};
  w.put_doubles(xs);
  const auto bytes = w.take();
  ByteReader r(bytes);
  EXPECT_EQ(r.get_u8(), 7u);
  EXPECT_EQ(r.get_u32(), 0xdeadbeefu);
  EXPECT_EQ(r.get_u64(), 1ULL << 40);
  EXPECT_EQ(r.get_f64(), -0.125);
  EXPECT_EQ(r.get_string(), "কে");
  EXPECT_EQ(r.get_doubles(), xs);
  EXPECT_TRUE(r.done());
  EXPECT_THROW(r.get_u8(), DataError);
}

TEST(Bytes, LittleEndian) {
  ByteWriter w;
  w.put_u32(0x01020304);
  EXPECT_EQ(w.bytes(), std::string("\x04\x03\x02\x01", 4));
}

TEST(Bytes, TruncatedTensorRejected) {
  ByteWriter w;
  w.put_u64(1000);
  w.put_f64(1.0);
  const auto bytes = w.take();
  ByteReader r(bytes);
  EXPECT_THROW(r.get_doubles(), DataError);
}

TEST(Crc32, KnownValue) { EXPECT_EQ(crc32_of("123456789"), 0xCBF43926u); }

TEST(Container, RoundTrip) {
  Container c;
  c.add("a", "hello");
  c.add("b", std::string("\0\1\2", 3));
  const auto bytes = c.encode();
  EXPECT_EQ(bytes.substr(0, 8), "QCLSBNDL");
  const auto back = Container::decode(bytes);
  EXPECT_EQ(back.sections(), c.sections());
  EXPECT_EQ(back.section("b"), std::string("\0\1\2", 3));
  EXPECT_TRUE(back.has("a"));
  EXPECT_FALSE(back.has("z"));
  EXPECT_THROW(back.section("z"), DataError);
}

TEST(Container, CorruptionDetected) {
  Container c;
  c.add("payload", std::string(100, 'x'));
  auto bytes = c.encode();
  auto flipped = bytes;
  flipped[30] ^= 0x01;
  try {
    Container::decode(flipped);
    FAIL() << "no error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
  }
  EXPECT_THROW(Container::decode(bytes.substr(0, 10)), DataError);
  EXPECT_THROW(Container::decode("NOTABUNDLE" + bytes.substr(10)), DataError);
}

TEST(Container, OlderVersionRejectedExplicitly) {
  Container c;
  c.add("x", "y");
  const auto bytes = c.encode(0);
  try {
    Container::decode(bytes);
    FAIL() << "no error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("version 0"), std::string::npos);
  }
}

TEST(Container, FileRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "qclass_container_test.bin").string();
  Container c;
  c.add("k", "v");
  c.write_file(path);
  EXPECT_EQ(Container::read_file(path).section("k"), "v");
  std::remove(path.c_str());
  EXPECT_THROW(Container::read_file(path), DataError);
}
