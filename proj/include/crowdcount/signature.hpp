//
// Copyright 2026 The crowdcount Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef CROWDCOUNT_SIGNATURE_H_
#define CROWDCOUNT_SIGNATURE_H_

#include <sodium.h>

#include <array>
#include <cstdint>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "crowdcount/random.hpp"

namespace crowdcount {

inline constexpr std::size_t kPublicKeyBytes = crypto_sign_PUBLICKEYBYTES;
inline constexpr std::size_t kSignatureBytes = crypto_sign_BYTES;

using PublicKey = std::array<std::uint8_t, kPublicKeyBytes>;
using Signature = std::vector<std::uint8_t>;

namespace internal {

inline void EnsureSodium() {
  static std::once_flag flag;
  std::call_once(flag, [] {
    if (sodium_init() < 0) {
      throw std::runtime_error("libsodium initialization failed");
    }
  });
}

}  // namespace internal

// Detached-signature key pair. Query provenance needs a standard asymmetric
// scheme, nothing more specific; Ed25519 fills that role here.
class SigningKey {
 public:
  static SigningKey Generate() {
    internal::EnsureSodium();
    SigningKey key;
    crypto_sign_keypair(key.public_.data(), key.secret_.data());
    return key;
  }

  static SigningKey FromSeed(std::span<const std::uint8_t, crypto_sign_SEEDBYTES> seed) {
    internal::EnsureSodium();
    SigningKey key;
    crypto_sign_seed_keypair(key.public_.data(), key.secret_.data(), seed.data());
    return key;
  }

  // Deterministic key material expanded from a 64-bit seed; for simulations
  // and tests that must reproduce identical identities.
  static SigningKey FromSeed(std::uint64_t seed) {
    std::array<std::uint8_t, crypto_sign_SEEDBYTES> bytes{};
    std::uint64_t word = seed;
    for (std::size_t i = 0; i < bytes.size(); i += 8) {
      word = internal::SplitMix64(word);
      for (std::size_t j = 0; j < 8; ++j) {
        bytes[i + j] = static_cast<std::uint8_t>(word >> (8 * j));
      }
    }
    return FromSeed(bytes);
  }

  Signature Sign(std::span<const std::uint8_t> message) const {
    Signature sig(kSignatureBytes);
    unsigned long long sig_len = 0;
    crypto_sign_detached(sig.data(), &sig_len, message.data(), message.size(),
                         secret_.data());
    sig.resize(sig_len);
    return sig;
  }

  const PublicKey& public_key() const { return public_; }

 private:
  SigningKey() = default;

  PublicKey public_{};
  std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> secret_{};
};

inline bool VerifySignature(std::span<const std::uint8_t> message,
                            std::span<const std::uint8_t> signature,
                            const PublicKey& key) {
  internal::EnsureSodium();
  if (signature.size() != kSignatureBytes) {
    return false;
  }
  return crypto_sign_verify_detached(signature.data(), message.data(),
                                     message.size(), key.data()) == 0;
}

inline std::string Base64Encode(std::span<const std::uint8_t> bytes) {
  internal::EnsureSodium();
  std::string out(sodium_base64_encoded_len(bytes.size(), sodium_base64_VARIANT_ORIGINAL), '\0');
  sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(),
                    sodium_base64_VARIANT_ORIGINAL);
  out.resize(out.find('\0'));  // sodium NUL-terminates in place
  return out;
}

inline std::vector<std::uint8_t> Base64Decode(const std::string& text) {
  internal::EnsureSodium();
  std::vector<std::uint8_t> out(text.size());
  std::size_t decoded = 0;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(),
                        nullptr, &decoded, nullptr,
                        sodium_base64_VARIANT_ORIGINAL) != 0) {
    throw std::invalid_argument("invalid base64 input");
  }
  out.resize(decoded);
  return out;
}

// One analyst's registered verification key.
struct KeyringEntry {
  std::string analyst_id;
  std::string public_key_id;
  PublicKey public_key{};
};

// Public keys the aggregator trusts, loaded at startup and keyed by
// public_key_id.
class Keyring {
 public:
  Keyring() = default;

  void Add(KeyringEntry entry) {
    if (entry.analyst_id.empty() || entry.public_key_id.empty()) {
      throw std::invalid_argument("keyring entry requires non-empty ids");
    }
    entries_.push_back(std::move(entry));
  }

  const KeyringEntry* Find(const std::string& public_key_id) const {
    for (const auto& entry : entries_) {
      if (entry.public_key_id == public_key_id) {
        return &entry;
      }
    }
    return nullptr;
  }

  const std::vector<KeyringEntry>& entries() const { return entries_; }

 private:
  std::vector<KeyringEntry> entries_;
};

}  // namespace crowdcount

#endif  // CROWDCOUNT_SIGNATURE_H_
