#include "ppopf/phe.hpp"

#include <cmath>
#include <limits>

#include "vendor_json.hpp"

namespace ppopf::phe {

namespace {

constexpr int kMillerRabinRounds = 40;
constexpr int kKeygenMaxRetries = 100000;

void check_same_key(std::uint64_t a, std::uint64_t b, const char* what) {
    if (a != b)
        throw PheError(std::string("key mismatch in ") + what);
}

} // namespace

GmpRng::GmpRng(std::uint64_t seed) {
    gmp_randinit_mt(state_);
    gmp_randseed_ui(state_, static_cast<unsigned long>(seed));
}

GmpRng::~GmpRng() { gmp_randclear(state_); }

mpz_class GmpRng::random_bits(int bits) {
    mpz_class out;
    mpz_urandomb(out.get_mpz_t(), state_, static_cast<mp_bitcnt_t>(bits));
    return out;
}

mpz_class GmpRng::random_below(const mpz_class& bound) {
    mpz_class out;
    mpz_urandomm(out.get_mpz_t(), state_, bound.get_mpz_t());
    return out;
}

mpz_class GmpRng::random_unit(const mpz_class& n) {
    for (int i = 0; i < 4096; ++i) {
        mpz_class r = random_below(n);
        if (r == 0)
            continue;
        mpz_class g;
        mpz_gcd(g.get_mpz_t(), r.get_mpz_t(), n.get_mpz_t());
        if (g == 1)
            return r;
    }
    throw PheError("could not sample a unit mod n");
}

namespace {

mpz_class random_prime_exact_bits(GmpRng& rng, int bits) {
    if (bits < 2)
        throw PheError("prime bit length must be >= 2");
    for (int attempt = 0; attempt < kKeygenMaxRetries; ++attempt) {
        mpz_class cand = rng.random_bits(bits);
        mpz_setbit(cand.get_mpz_t(), static_cast<mp_bitcnt_t>(bits - 1)); // exact width
        mpz_setbit(cand.get_mpz_t(), 0);                                  // odd
        if (mpz_probab_prime_p(cand.get_mpz_t(), kMillerRabinRounds) > 0)
            return cand;
    }
    throw PheError("prime generation failed after bounded retries");
}

} // namespace

PaillierKeyPair keygen(int bit_length, std::uint64_t rng_seed) {
    if (bit_length < 6 || bit_length % 2 != 0)
        throw PheError("keygen: bit_length must be even and >= 6");
    GmpRng rng(rng_seed);
    const int half = bit_length / 2;
    for (int attempt = 0; attempt < kKeygenMaxRetries; ++attempt) {
        mpz_class p = random_prime_exact_bits(rng, half);
        mpz_class q = random_prime_exact_bits(rng, half);
        if (p == q)
            continue;
        mpz_class n = p * q;
        if (mpz_sizeinbase(n.get_mpz_t(), 2) != static_cast<size_t>(bit_length))
            continue;
        mpz_class lambda = (p - 1) * (q - 1);
        mpz_class mu;
        if (mpz_invert(mu.get_mpz_t(), lambda.get_mpz_t(), n.get_mpz_t()) == 0)
            continue; // gcd(lambda, n) != 1; rare, redraw
        PaillierKeyPair kp;
        kp.pub.n = n;
        kp.pub.g = n + 1;
        kp.pub.n2 = n * n;
        kp.pub.bit_length = bit_length;
        kp.pub.key_id = derive_seed(rng_seed, "paillier-key", {static_cast<std::uint64_t>(bit_length)});
        kp.priv.lambda = lambda;
        kp.priv.mu = mu;
        kp.priv.key_id = kp.pub.key_id;
        return kp;
    }
    throw PheError("keygen failed after bounded retries");
}

Ciphertext encrypt(const PaillierPublicKey& pk, const mpz_class& m, const mpz_class& r) {
    if (m < 0 || m >= pk.n)
        throw PheError("encrypt: message out of range [0, n)");
    if (r <= 0 || r >= pk.n)
        throw PheError("encrypt: nonce out of range");
    mpz_class g;
    mpz_gcd(g.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t());
    if (g != 1)
        throw PheError("encrypt: invalid nonce, gcd(r, n) != 1");

    // g = n+1, so g^m = 1 + m*n (mod n^2).
    mpz_class gm = (1 + m * pk.n) % pk.n2;
    mpz_class rn;
    mpz_powm(rn.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t(), pk.n2.get_mpz_t());
    Ciphertext c;
    c.value = (gm * rn) % pk.n2;
    c.key_id = pk.key_id;
    return c;
}

Ciphertext encrypt(const PaillierPublicKey& pk, const mpz_class& m, GmpRng& rng) {
    return encrypt(pk, m, rng.random_unit(pk.n));
}

mpz_class decrypt(const PaillierPrivateKey& sk, const PaillierPublicKey& pk,
                  const Ciphertext& c) {
    check_same_key(sk.key_id, pk.key_id, "decrypt");
    check_same_key(c.key_id, pk.key_id, "decrypt");
    if (c.value < 0 || c.value >= pk.n2)
        throw PheError("decrypt: ciphertext out of range");
    mpz_class u;
    mpz_powm(u.get_mpz_t(), c.value.get_mpz_t(), sk.lambda.get_mpz_t(), pk.n2.get_mpz_t());
    mpz_class L = (u - 1) / pk.n; // exact by construction
    return (L * sk.mu) % pk.n;
}

Ciphertext homomorphic_add(const PaillierPublicKey& pk, const Ciphertext& c1,
                           const Ciphertext& c2) {
    check_same_key(c1.key_id, pk.key_id, "homomorphic_add");
    check_same_key(c2.key_id, pk.key_id, "homomorphic_add");
    Ciphertext out;
    out.value = (c1.value * c2.value) % pk.n2;
    out.key_id = pk.key_id;
    return out;
}

Ciphertext homomorphic_scale(const PaillierPublicKey& pk, const Ciphertext& c,
                             const mpz_class& k) {
    check_same_key(c.key_id, pk.key_id, "homomorphic_scale");
    if (k < 1)
        throw PheError("homomorphic_scale: k must be a positive integer");
    Ciphertext out;
    mpz_powm(out.value.get_mpz_t(), c.value.get_mpz_t(), k.get_mpz_t(), pk.n2.get_mpz_t());
    out.key_id = pk.key_id;
    return out;
}

std::int64_t FixedPointCodec::encode(double x) const {
    if (!std::isfinite(x))
        throw RangeError("codec: non-finite value");
    const double scaled = x * static_cast<double>(scale);
    const double limit = std::ldexp(1.0, word_bits - 1); // 2^(word_bits-1)
    if (std::abs(scaled) >= limit)
        throw RangeError("codec: value " + std::to_string(x) + " overflows signed word range");
    // round half away from zero
    return static_cast<std::int64_t>(std::llround(scaled));
}

double FixedPointCodec::decode(std::int64_t z) const {
    return static_cast<double>(z) / static_cast<double>(scale);
}

mpz_class FixedPointCodec::to_ring(std::int64_t z, const mpz_class& n) const {
    if (z >= 0)
        return mpz_class(static_cast<unsigned long>(z)) % n;
    mpz_class mag(static_cast<unsigned long>(-(z + 1)) + 1UL);
    return (n - mag) % n;
}

std::int64_t FixedPointCodec::from_ring(const mpz_class& v, const mpz_class& n) const {
    mpz_class half = n / 2;
    mpz_class signed_v = (v > half) ? mpz_class(v - n) : v;
    if (!signed_v.fits_slong_p())
        throw RangeError("codec: decoded value exceeds signed word range; "
                         "use a larger key or a smaller penalty range");
    long s = signed_v.get_si();
    return static_cast<std::int64_t>(s);
}

std::int64_t encode_real(const FixedPointCodec& codec, double x) { return codec.encode(x); }

double decode_real(const FixedPointCodec& codec, const mpz_class& z, const mpz_class& n) {
    return codec.decode(codec.from_ring(z, n));
}

std::string to_hex(const mpz_class& v) {
    if (v < 0)
        throw PheError("to_hex: negative value");
    return v.get_str(16);
}

mpz_class from_hex(const std::string& hex) {
    mpz_class v;
    if (v.set_str(hex, 16) != 0)
        throw SchemaError("invalid hex string: " + hex);
    return v;
}

std::string ciphertext_to_string(const Ciphertext& c) {
    return std::to_string(c.key_id) + ":" + to_hex(c.value);
}

Ciphertext ciphertext_from_string(const std::string& s) {
    auto pos = s.find(':');
    if (pos == std::string::npos)
        throw SchemaError("ciphertext string missing key_id separator");
    Ciphertext c;
    c.key_id = std::stoull(s.substr(0, pos));
    c.value = from_hex(s.substr(pos + 1));
    return c;
}

std::string public_key_to_json(const PaillierPublicKey& pk) {
    nlohmann::json j;
    j["n"] = to_hex(pk.n);
    j["g"] = to_hex(pk.g);
    j["bit_length"] = pk.bit_length;
    j["key_id"] = pk.key_id;
    return j.dump(2);
}

PaillierPublicKey public_key_from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    PaillierPublicKey pk;
    pk.n = from_hex(j.at("n").get<std::string>());
    pk.g = from_hex(j.at("g").get<std::string>());
    pk.n2 = pk.n * pk.n;
    pk.bit_length = j.at("bit_length").get<int>();
    pk.key_id = j.at("key_id").get<std::uint64_t>();
    if (pk.g != pk.n + 1)
        throw SchemaError("public key: g != n + 1");
    return pk;
}

std::string private_key_to_json(const PaillierPrivateKey& sk) {
    nlohmann::json j;
    j["lambda"] = to_hex(sk.lambda);
    j["mu"] = to_hex(sk.mu);
    j["key_id"] = sk.key_id;
    return j.dump(2);
}

PaillierPrivateKey private_key_from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    PaillierPrivateKey sk;
    sk.lambda = from_hex(j.at("lambda").get<std::string>());
    sk.mu = from_hex(j.at("mu").get<std::string>());
    sk.key_id = j.at("key_id").get<std::uint64_t>();
    return sk;
}

} // namespace ppopf::phe
