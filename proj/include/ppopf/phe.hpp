#pragma once

#include <cstdint>
#include <string>

#include <gmpxx.h>

#include "ppopf/common.hpp"

namespace ppopf::phe {

/// Deterministic GMP random state. One instance per logical stream; never
/// shared between agents.
class GmpRng {
public:
    explicit GmpRng(std::uint64_t seed);
    ~GmpRng();
    GmpRng(const GmpRng&) = delete;
    GmpRng& operator=(const GmpRng&) = delete;

    mpz_class random_bits(int bits);
    mpz_class random_below(const mpz_class& bound); // uniform in [0, bound)
    /// Uniform in Z_n^* (coprime to n).
    mpz_class random_unit(const mpz_class& n);

private:
    gmp_randstate_t state_;
};

struct PaillierPublicKey {
    mpz_class n;  // p*q
    mpz_class g;  // n + 1
    mpz_class n2; // n^2, cached
    int bit_length = 0;
    std::uint64_t key_id = 0;
};

struct PaillierPrivateKey {
    mpz_class lambda; // (p-1)(q-1)
    mpz_class mu;     // lambda^{-1} mod n
    std::uint64_t key_id = 0;
};

struct PaillierKeyPair {
    PaillierPublicKey pub;
    PaillierPrivateKey priv;
};

struct Ciphertext {
    mpz_class value; // element of Z*_{n^2}
    std::uint64_t key_id = 0;

    bool operator==(const Ciphertext&) const = default;
};

/// Generates equal bit-length primes p, q with Miller-Rabin (40 rounds),
/// n = p*q of exactly `bit_length` bits, g = n+1, lambda = (p-1)(q-1),
/// mu = lambda^{-1} mod n. Deterministic for a fixed seed.
PaillierKeyPair keygen(int bit_length, std::uint64_t rng_seed);

/// c = g^m * r^n mod n^2 with an explicit nonce r in Z_n^*.
Ciphertext encrypt(const PaillierPublicKey& pk, const mpz_class& m, const mpz_class& r);

/// Same, drawing r fresh from `rng`.
Ciphertext encrypt(const PaillierPublicKey& pk, const mpz_class& m, GmpRng& rng);

/// m = L(c^lambda mod n^2) * mu mod n with L(u) = (u-1)/n.
mpz_class decrypt(const PaillierPrivateKey& sk, const PaillierPublicKey& pk,
                  const Ciphertext& c);

/// Decrypts to (m1 + m2) mod n.
Ciphertext homomorphic_add(const PaillierPublicKey& pk, const Ciphertext& c1,
                           const Ciphertext& c2);

/// Decrypts to (k * m) mod n; k >= 1.
Ciphertext homomorphic_scale(const PaillierPublicKey& pk, const Ciphertext& c,
                             const mpz_class& k);

/// Maps reals to the plaintext ring at a fixed scale. Negative values are
/// stored as ring complements (values above n/2 decode as negatives) so that
/// homomorphic differences keep their sign.
struct FixedPointCodec {
    std::int64_t scale = 10'000'000'000LL; // 10^10
    int word_bits = 64;

    /// Signed fixed-point encoding, round-half-away-from-zero.
    std::int64_t encode(double x) const;
    double decode(std::int64_t z) const;

    mpz_class to_ring(std::int64_t z, const mpz_class& n) const;
    /// Inverse of to_ring; throws RangeError if the decoded magnitude exceeds
    /// the signed word range.
    std::int64_t from_ring(const mpz_class& v, const mpz_class& n) const;

    double quantum() const { return 1.0 / static_cast<double>(scale); }
};

std::int64_t encode_real(const FixedPointCodec& codec, double x);
double decode_real(const FixedPointCodec& codec, const mpz_class& z, const mpz_class& n);

// --- serialization ---

std::string to_hex(const mpz_class& v);
mpz_class from_hex(const std::string& hex);

/// "<key_id>:<big-endian hex>"
std::string ciphertext_to_string(const Ciphertext& c);
Ciphertext ciphertext_from_string(const std::string& s);

std::string public_key_to_json(const PaillierPublicKey& pk);
PaillierPublicKey public_key_from_json(const std::string& text);
std::string private_key_to_json(const PaillierPrivateKey& sk);
PaillierPrivateKey private_key_from_json(const std::string& text);

} // namespace ppopf::phe
