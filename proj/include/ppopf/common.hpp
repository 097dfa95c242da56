#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ppopf {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input files (case, partition, config).
struct SchemaError : Error {
    using Error::Error;
};

// Cryptographic misuse: bad key sizes, out-of-range plaintexts, key mismatch.
struct PheError : Error {
    using Error::Error;
};

// Fixed-point overflow or non-representable value.
struct RangeError : Error {
    using Error::Error;
};

// Violated caller contract (asymmetric dual, dimension mismatch, ...).
struct ContractError : Error {
    using Error::Error;
};

struct ProtocolError : Error {
    using Error::Error;
};

// Formats a double with 12 significant digits; shared by every CSV/report
// writer so that twin-run diffs are byte-meaningful.
std::string format_sig(double v);

std::uint64_t splitmix64(std::uint64_t x);

// Stateless keyed derivation: the same (root, tag, words) always yields the
// same stream seed, independent of call order.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag,
                          std::initializer_list<std::uint64_t> words);

} // namespace ppopf
