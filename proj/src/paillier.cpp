#include "flt/paillier.hpp"

#include <vector>

#include "flt/error.hpp"
#include "flt/rng.hpp"

namespace flt::paillier {

namespace {

std::vector<unsigned char> to_bytes(const mpz_class& v) {
  std::size_t count = 0;
  const std::size_t size = (mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8;
  std::vector<unsigned char> out(size == 0 ? 1 : size, 0);
  mpz_export(out.data(), &count, 1, 1, 1, 0, v.get_mpz_t());
  out.resize(count == 0 ? 1 : count);
  return out;
}

std::uint64_t fnv1a(const std::vector<unsigned char>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

mpz_class random_prime(unsigned bits, gmp_randclass& rng) {
  while (true) {
    mpz_class c = rng.get_z_bits(bits);
    mpz_setbit(c.get_mpz_t(), bits - 1);  // exact bit length
    mpz_setbit(c.get_mpz_t(), bits - 2);  // product keeps full length
    mpz_class p;
    mpz_nextprime(p.get_mpz_t(), c.get_mpz_t());
    if (mpz_sizeinbase(p.get_mpz_t(), 2) == bits) return p;
  }
}

}  // namespace

PublicKey::PublicKey(mpz_class n) : n_(std::move(n)), n2_(n_ * n_) {
  fingerprint_ = fnv1a(to_bytes(n_));
}

unsigned PublicKey::key_bits() const {
  return static_cast<unsigned>(mpz_sizeinbase(n_.get_mpz_t(), 2));
}

mpz_class PublicKey::encrypt(const mpz_class& m, gmp_randclass& rng) const {
  if (m < 0 || m >= n_) throw EncodingError("plaintext outside [0, n)");
  mpz_class r;
  do {
    r = rng.get_z_range(n_);
  } while (r == 0 || gcd(r, n_) != 1);
  mpz_class rn;
  mpz_powm(rn.get_mpz_t(), r.get_mpz_t(), n_.get_mpz_t(), n2_.get_mpz_t());
  mpz_class gm = (1 + m * n_) % n2_;
  return (gm * rn) % n2_;
}

mpz_class PublicKey::add(const mpz_class& c1, const mpz_class& c2) const {
  return (c1 * c2) % n2_;
}

SecretKey::SecretKey(const PublicKey& pub, mpz_class p, mpz_class q)
    : pub_(pub), p_(std::move(p)), q_(std::move(q)) {
  lambda_ = lcm(p_ - 1, q_ - 1);
  // With g = n + 1, L(g^lambda mod n^2) = lambda mod n.
  mpz_class l = lambda_ % pub_.n();
  if (mpz_invert(mu_.get_mpz_t(), l.get_mpz_t(), pub_.n().get_mpz_t()) == 0) {
    throw ConfigError("lambda is not invertible mod n");
  }
}

mpz_class SecretKey::decrypt(const mpz_class& c) const {
  if (c <= 0 || c >= pub_.n_squared()) throw ProtocolError("ciphertext outside [1, n^2)");
  mpz_class u;
  mpz_powm(u.get_mpz_t(), c.get_mpz_t(), lambda_.get_mpz_t(), pub_.n_squared().get_mpz_t());
  mpz_class l = (u - 1) / pub_.n();
  return (l * mu_) % pub_.n();
}

KeyPair keygen(unsigned key_bits, std::uint64_t seed) {
  if (key_bits < 512) throw ConfigError("key_bits must be >= 512");
  if (key_bits % 2 != 0) throw ConfigError("key_bits must be even");
  gmp_randclass rng(gmp_randinit_mt);
  rng.seed(mpz_class(std::to_string(derive_seed(seed, {seed_tag::kKeygen}))));
  const unsigned half = key_bits / 2;
  while (true) {
    mpz_class p = random_prime(half, rng);
    mpz_class q = random_prime(half, rng);
    if (p == q) continue;
    mpz_class n = p * q;
    if (gcd(n, (p - 1) * (q - 1)) != 1) continue;
    if (mpz_sizeinbase(n.get_mpz_t(), 2) != key_bits) continue;
    PublicKey pub(n);
    return {pub, SecretKey(pub, p, q), key_bits};
  }
}

EncryptionRng::EncryptionRng(std::uint64_t seed) : state_(gmp_randinit_mt) {
  state_.seed(mpz_class(std::to_string(derive_seed(seed, {seed_tag::kEncrypt}))));
}

std::string to_hex(const mpz_class& v) { return v.get_str(16); }

mpz_class from_hex(const std::string& s) {
  mpz_class v;
  if (s.empty() || v.set_str(s, 16) != 0) throw IoError("malformed hex integer");
  return v;
}

}  // namespace flt::paillier
