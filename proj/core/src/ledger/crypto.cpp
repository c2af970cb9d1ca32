#include "ces/ledger/crypto.hpp"

#include <sodium.h>

#include <cstring>
#include <stdexcept>

#include "ces/common/error.hpp"

namespace ces::ledger {

namespace {

void ensure_init() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw Error(ErrorCode::kInvalidArgument, "libsodium failed to initialize");
}

}  // namespace

Digest sha256(std::string_view data) {
  ensure_init();
  Digest out{};
  crypto_hash_sha256(out.data(), reinterpret_cast<const unsigned char*>(data.data()), data.size());
  return out;
}

Digest sha256(const Digest& left, const Digest& right) {
  std::string buf(64, '\0');
  std::memcpy(buf.data(), left.data(), 32);
  std::memcpy(buf.data() + 32, right.data(), 32);
  return sha256(buf);
}

std::string sha256_hex(std::string_view data) { return to_hex(sha256(data)); }

KeyPair keypair_from_seed(std::string_view seed) {
  ensure_init();
  const Digest s = sha256(seed);
  KeyPair kp;
  crypto_sign_seed_keypair(kp.public_key.data(), kp.secret_key.data(), s.data());
  return kp;
}

Signature sign(std::string_view message, const KeyPair& key) {
  ensure_init();
  Signature sig{};
  crypto_sign_detached(sig.data(), nullptr, reinterpret_cast<const unsigned char*>(message.data()), message.size(),
                       key.secret_key.data());
  return sig;
}

bool verify(std::string_view message, const Signature& sig, const PublicKey& key) {
  ensure_init();
  return crypto_sign_verify_detached(sig.data(), reinterpret_cast<const unsigned char*>(message.data()),
                                     message.size(), key.data()) == 0;
}

std::string random_hex(std::size_t bytes) {
  ensure_init();
  std::vector<std::uint8_t> buf(bytes);
  randombytes_buf(buf.data(), buf.size());
  return to_hex(buf.data(), buf.size());
}

std::string to_hex(const std::uint8_t* data, std::size_t size) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(size * 2, '0');
  for (std::size_t i = 0; i < size; ++i) {
    out[2 * i] = kDigits[data[i] >> 4];
    out[2 * i + 1] = kDigits[data[i] & 0xF];
  }
  return out;
}

std::vector<std::uint8_t> from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  if (hex.size() % 2) throw Error(ErrorCode::kMalformedDocument, "hex string of odd length");
  std::vector<std::uint8_t> out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int hi = nibble(hex[2 * i]), lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error(ErrorCode::kMalformedDocument, "invalid lowercase hex digit");
    out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return out;
}

template <std::size_t N>
std::array<std::uint8_t, N> from_hex_fixed(std::string_view hex) {
  auto bytes = from_hex(hex);
  if (bytes.size() != N) {
    throw Error(ErrorCode::kMalformedDocument,
                "expected " + std::to_string(N) + " bytes of hex, got " + std::to_string(bytes.size()));
  }
  std::array<std::uint8_t, N> out{};
  std::memcpy(out.data(), bytes.data(), N);
  return out;
}

template std::array<std::uint8_t, 32> from_hex_fixed<32>(std::string_view);
template std::array<std::uint8_t, 64> from_hex_fixed<64>(std::string_view);

}  // namespace ces::ledger
