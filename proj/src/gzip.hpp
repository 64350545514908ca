#ifndef DEATHCAST_SRC_GZIP_HPP_
#define DEATHCAST_SRC_GZIP_HPP_

#include <string>
#include <string_view>

namespace deathcast::internal {

bool LooksGzipped(std::string_view bytes);
std::string GunzipOrThrow(std::string_view bytes);
// Output carries a zero mtime, so identical input gives identical bytes.
std::string Gzip(std::string_view bytes);

}  // namespace deathcast::internal

#endif  // DEATHCAST_SRC_GZIP_HPP_
