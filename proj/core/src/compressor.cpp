#include <zlib.h>

#include <vector>

#include "ood/density_models.hpp"
#include "ood/error.hpp"

namespace ood {

std::string codec_library_version() { return std::string("zlib ") + zlibVersion(); }

std::size_t compressed_length(const CodecSpec& codec, std::span<const std::uint8_t> bytes) {
  require(codec.level >= 0 && codec.level <= 9, "codec level must be in [0, 9]");
  int window_bits = 0;
  if (codec.identifier == "zlib") {
    window_bits = 15;
  } else if (codec.identifier == "deflate") {
    window_bits = -15;
  } else {
    fail(ErrorCode::invalid_argument,
         "unknown codec '" + codec.identifier + "' (supported: zlib, deflate)");
  }

  z_stream stream{};
  if (deflateInit2(&stream, codec.level, Z_DEFLATED, window_bits, 8, Z_DEFAULT_STRATEGY) != Z_OK)
    fail(ErrorCode::numerical, "deflateInit2 failed");
  std::vector<unsigned char> out(deflateBound(&stream, static_cast<uLong>(bytes.size())) + 16);
  stream.next_in = const_cast<Bytef*>(bytes.data());
  stream.avail_in = static_cast<uInt>(bytes.size());
  stream.next_out = out.data();
  stream.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&stream, Z_FINISH);
  const std::size_t produced = stream.total_out;
  deflateEnd(&stream);
  if (rc != Z_STREAM_END) fail(ErrorCode::numerical, "deflate did not finish");
  return produced;
}

}  // namespace ood
