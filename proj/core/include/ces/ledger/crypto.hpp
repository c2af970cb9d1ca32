#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ces::ledger {

using Digest = std::array<std::uint8_t, 32>;
using PublicKey = std::array<std::uint8_t, 32>;
using Signature = std::array<std::uint8_t, 64>;

struct KeyPair {
  PublicKey public_key{};
  std::array<std::uint8_t, 64> secret_key{};
};

// SHA-256 and Ed25519 (libsodium).
Digest sha256(std::string_view data);
Digest sha256(const Digest& left, const Digest& right);
std::string sha256_hex(std::string_view data);

// Deterministic key pair from an arbitrary seed string (hashed to 32 bytes).
KeyPair keypair_from_seed(std::string_view seed);
Signature sign(std::string_view message, const KeyPair& key);
bool verify(std::string_view message, const Signature& sig, const PublicKey& key);

// Hex of `bytes` bytes from the system CSPRNG.
std::string random_hex(std::size_t bytes);

std::string to_hex(const std::uint8_t* data, std::size_t size);
template <std::size_t N>
std::string to_hex(const std::array<std::uint8_t, N>& a) {
  return to_hex(a.data(), N);
}
// Throws Error{kMalformedDocument} on bad input or length mismatch.
std::vector<std::uint8_t> from_hex(std::string_view hex);
template <std::size_t N>
std::array<std::uint8_t, N> from_hex_fixed(std::string_view hex);

extern template std::array<std::uint8_t, 32> from_hex_fixed<32>(std::string_view);
extern template std::array<std::uint8_t, 64> from_hex_fixed<64>(std::string_view);

}  // namespace ces::ledger
