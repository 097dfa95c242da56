#include "ppopf/common.hpp"

#include <cstdio>

namespace ppopf {

std::string format_sig(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag,
                          std::initializer_list<std::uint64_t> words) {
    std::uint64_t h = splitmix64(root ^ 0x243f6a8885a308d3ULL);
    for (char c : tag)
        h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
    for (std::uint64_t w : words)
        h = splitmix64(h ^ w);
    return h;
}

} // namespace ppopf
