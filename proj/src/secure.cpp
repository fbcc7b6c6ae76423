#include "flt/secure.hpp"

#include <bit>
#include <cmath>
#include <future>
#include <istream>
#include <ostream>
#include <sstream>

#include "flt/error.hpp"
#include "flt/rng.hpp"

namespace flt {

void validate(const FixedPointCodec& c) {
  if (c.scale_bits < 1 || c.scale_bits > 40) throw ConfigError("scale_bits must be in [1, 40]");
  if (!(c.clamp_range > 0.0) || !std::isfinite(c.clamp_range)) {
    throw ConfigError("clamp_range must be positive and finite");
  }
}

double FixedPointCodec::resolution() const { return std::ldexp(1.0, -scale_bits); }

std::int64_t FixedPointCodec::quantize(double x) const {
  if (!std::isfinite(x) || std::abs(x) > clamp_range) {
    throw EncodingError("value " + std::to_string(x) + " outside clamp range");
  }
  return std::llround(std::ldexp(x, scale_bits));
}

double FixedPointCodec::dequantize(std::int64_t q) const {
  return std::ldexp(static_cast<double>(q), -scale_bits);
}

mpz_class FixedPointCodec::encode(double x, const mpz_class& n) const {
  const std::int64_t q = quantize(x);
  mpz_class v(static_cast<long>(q));
  if (v < 0) v += n;
  return v;
}

double FixedPointCodec::decode(const mpz_class& residue, const mpz_class& n) const {
  mpz_class v = residue;
  if (v > n / 2) v -= n;
  if (!mpz_fits_slong_p(v.get_mpz_t())) throw EncodingError("decoded value overflows int64");
  return dequantize(v.get_si());
}

CipherParams sec_trans(const ParamView& params, const paillier::PublicKey& recipient,
                       const FixedPointCodec& codec, paillier::EncryptionRng& rng) {
  validate(codec);
  CipherParams out;
  out.layer_name = params.layer_name;
  out.codec = codec;
  out.count = 1;
  out.key_fingerprint = recipient.fingerprint();
  out.visibility = params.visibility;
  out.ciphertexts.reserve(params.values.size());
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    const double x = params.values[i];
    if (!std::isfinite(x) || std::abs(x) > codec.clamp_range) {
      throw EncodingError("layer '" + params.layer_name + "' value at index " + std::to_string(i) +
                          " (" + std::to_string(x) + ") outside clamp range " +
                          std::to_string(codec.clamp_range));
    }
    out.ciphertexts.push_back(recipient.encrypt(codec.encode(x, recipient.n()), rng.state()));
  }
  return out;
}

CipherParams hom_aggregate(std::span<const CipherParams> ciphers, const paillier::PublicKey& key) {
  if (ciphers.empty()) throw InputError("nothing to aggregate");
  const auto& first = ciphers.front();
  CipherParams out = first;
  for (std::size_t i = 0; i < ciphers.size(); ++i) {
    const auto& c = ciphers[i];
    if (c.key_fingerprint != key.fingerprint()) {
      throw ProtocolError("ciphertext " + std::to_string(i) + " is under a different key");
    }
    if (c.layer_name != first.layer_name) throw ProtocolError("aggregating different layers");
    if (!(c.codec == first.codec)) throw ProtocolError("aggregating different codecs");
    if (c.ciphertexts.size() != first.ciphertexts.size()) {
      throw ProtocolError("aggregating ciphertext arrays of different lengths");
    }
    if (i == 0) continue;
    for (std::size_t e = 0; e < out.ciphertexts.size(); ++e) {
      out.ciphertexts[e] = key.add(out.ciphertexts[e], c.ciphertexts[e]);
    }
    out.count += c.count;
  }
  return out;
}

std::vector<double> decrypt_sum(const CipherParams& cipher, const paillier::KeyPair& keys) {
  if (cipher.key_fingerprint != keys.public_key.fingerprint()) {
    throw ProtocolError("ciphertext was not produced under this key");
  }
  std::vector<double> out;
  out.reserve(cipher.ciphertexts.size());
  for (const auto& c : cipher.ciphertexts) {
    out.push_back(cipher.codec.decode(keys.secret_key.decrypt(c), keys.public_key.n()));
  }
  return out;
}

ParamView decrypt_mean(const CipherParams& cipher, const paillier::KeyPair& keys) {
  if (cipher.count == 0) throw ProtocolError("cipher count is zero");
  ParamView out{cipher.layer_name, decrypt_sum(cipher, keys), cipher.visibility};
  const double n = static_cast<double>(cipher.count);
  for (double& v : out.values) v /= n;
  return out;
}

namespace {

constexpr char kMagic[4] = {'F', 'L', 'T', 'C'};
constexpr std::uint8_t kVersion = 1;

void put_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }

template <typename T>
void put_be(std::ostream& out, T v) {
  for (int shift = static_cast<int>(sizeof(T) * 8) - 8; shift >= 0; shift -= 8) {
    out.put(static_cast<char>((static_cast<std::uint64_t>(v) >> shift) & 0xff));
  }
}

std::uint8_t get_u8(std::istream& in) {
  const int c = in.get();
  if (c == std::char_traits<char>::eof()) throw IoError("cipher stream truncated");
  return static_cast<std::uint8_t>(c);
}

template <typename T>
T get_be(std::istream& in) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v = (v << 8) | get_u8(in);
  return static_cast<T>(v);
}

}  // namespace

void write_cipher(const CipherParams& c, std::ostream& out) {
  out.write(kMagic, 4);
  put_u8(out, kVersion);
  put_be<std::uint32_t>(out, static_cast<std::uint32_t>(c.layer_name.size()));
  out.write(c.layer_name.data(), static_cast<std::streamsize>(c.layer_name.size()));
  put_u8(out, c.visibility == Visibility::kCommon ? 0 : 1);
  put_be<std::uint32_t>(out, static_cast<std::uint32_t>(c.codec.scale_bits));
  put_be<std::uint64_t>(out, std::bit_cast<std::uint64_t>(c.codec.clamp_range));
  put_be<std::uint32_t>(out, c.count);
  put_be<std::uint64_t>(out, c.key_fingerprint);
  put_be<std::uint32_t>(out, static_cast<std::uint32_t>(c.ciphertexts.size()));
  std::vector<unsigned char> buf;
  for (const auto& v : c.ciphertexts) {
    const std::size_t size = (mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8;
    buf.assign(size, 0);
    std::size_t written = 0;
    mpz_export(buf.data(), &written, 1, 1, 1, 0, v.get_mpz_t());
    put_be<std::uint32_t>(out, static_cast<std::uint32_t>(written));
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(written));
  }
}

CipherParams read_cipher(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4)) {
    throw IoError("not a cipher stream (bad magic)");
  }
  if (get_u8(in) != kVersion) throw IoError("unsupported cipher stream version");
  CipherParams c;
  const auto name_len = get_be<std::uint32_t>(in);
  c.layer_name.resize(name_len);
  if (!in.read(c.layer_name.data(), name_len)) throw IoError("cipher stream truncated");
  c.visibility = get_u8(in) == 0 ? Visibility::kCommon : Visibility::kPrivate;
  c.codec.scale_bits = static_cast<int>(get_be<std::uint32_t>(in));
  c.codec.clamp_range = std::bit_cast<double>(get_be<std::uint64_t>(in));
  c.count = get_be<std::uint32_t>(in);
  c.key_fingerprint = get_be<std::uint64_t>(in);
  const auto n = get_be<std::uint32_t>(in);
  c.ciphertexts.resize(n);
  std::vector<unsigned char> buf;
  for (auto& v : c.ciphertexts) {
    const auto len = get_be<std::uint32_t>(in);
    buf.resize(len);
    if (!in.read(reinterpret_cast<char*>(buf.data()), len)) throw IoError("cipher stream truncated");
    mpz_import(v.get_mpz_t(), len, 1, 1, 1, 0, buf.data());
  }
  return c;
}

std::string serialize_cipher(const CipherParams& cipher) {
  std::ostringstream out(std::ios::binary);
  write_cipher(cipher, out);
  return out.str();
}

CipherParams deserialize_cipher(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return read_cipher(in);
}

SecureAggregator::SecureAggregator(paillier::KeyPair keys, FixedPointCodec codec,
                                   std::uint64_t seed)
    : keys_(std::move(keys)), codec_(codec), seed_(seed) {
  validate(codec_);
}

std::vector<ParamView> SecureAggregator::aggregate(std::span<const LayeredModel> uploads,
                                                   std::span<const std::size_t> members,
                                                   VisibilityFilter filter) {
  if (members.empty()) throw InputError("secure aggregation of an empty cohort");
  // Every device encrypts its own upload, so each gets its own randomness
  // stream and the members run concurrently.
  const std::uint64_t call = calls_++;
  auto encrypt = [&](std::size_t m) {
    paillier::EncryptionRng rng(derive_seed(seed_, {call, m}));
    std::vector<std::string> wires;
    for (const auto& view : extract_params(uploads[m], filter)) {
      wires.push_back(serialize_cipher(sec_trans(view, keys_.public_key, codec_, rng)));
    }
    return wires;
  };
  std::vector<std::future<std::vector<std::string>>> jobs;
  for (std::size_t m : members) jobs.push_back(std::async(std::launch::async, encrypt, m));
  std::vector<std::vector<CipherParams>> per_layer;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto wires = jobs[i].get();
    const auto views = extract_params(uploads[members[i]], filter);
    per_layer.resize(wires.size());
    for (std::size_t k = 0; k < wires.size(); ++k) {
      // Each upload crosses the simulated wire in serialized form.
      plaintext_bytes_ += 8 * views[k].values.size();
      ciphertext_bytes_ += wires[k].size();
      per_layer[k].push_back(deserialize_cipher(wires[k]));
    }
  }
  std::vector<ParamView> out;
  for (const auto& layer : per_layer) {
    out.push_back(decrypt_mean(hom_aggregate(layer, keys_.public_key), keys_));
  }
  return out;
}

double encryption_strength(unsigned key_bits) {
  return std::min(1.0, static_cast<double>(key_bits) / 4096.0);
}

double transfer_efficiency(std::uint64_t plaintext_bytes, std::uint64_t ciphertext_bytes) {
  if (ciphertext_bytes == 0) return 0.0;
  return std::min(1.0, static_cast<double>(plaintext_bytes) / static_cast<double>(ciphertext_bytes));
}

double security_metric(double enc_strength, double trans_efficiency, double gamma) {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(enc_strength) || !unit(trans_efficiency) || !unit(gamma)) {
    throw InputError("security metric inputs must lie in [0, 1]");
  }
  return gamma * enc_strength + (1.0 - gamma) * trans_efficiency;
}

}  // namespace flt
