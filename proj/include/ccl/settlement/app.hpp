#pragma once

#include "ccl/settlement/settlement.hpp"

#include <functional>
#include <string>
#include <vector>

namespace ccl::settlement {

/// Signed application request. Write paths:
///   /app/mint {to, amount}                                  signer: central bank
///   /app/redeem {from, amount, cb_signature}                signer: from
///   /app/transfer {to, amount, private?}                    signer: sender
///   /app/claims/issue|retire {client, amount, private?}     signer: intermediary
///   /app/assets/register {asset_id, quantity, holder}       signer: issuer
///   /app/assets/transfer {asset_id, to, quantity, private?} signer: sender
///   /app/dvp {instruction_id, buyer, asset_id, quantity, price, private?, buyer_signature}  signer: seller
/// Read paths: /app/balance {party}, /app/asset {asset_id}.
/// Bodies may carry any extra field (for example a client nonce); all are signed.
struct AppRequest
{
    std::string path;
    PartyId signer;
    json body;
    crypto::Signature signature{};
};

struct AppOutcome
{
    json result;
    bool private_payload = false;
    /// Parties allowed to read the transaction.
    std::vector<PartyId> parties;
};

bool is_write_path(std::string_view path);
bool is_read_path(std::string_view path);

/// Bytes a co-signer signs: the request signing bytes of `path` + "#cosign" over
/// the body with the co-signature field removed.
Bytes cosign_bytes(std::string_view path, const json& body, const char* cosign_field);

AppRequest sign_request(std::string path, const PartyId& signer, json body, const crypto::KeyPair& key);

/// Verifies the signature and executes a write. Throws Error on rejection, leaving state untouched.
AppOutcome execute(Settlement& s, const AppRequest& r, const std::function<void()>& between_legs = {});

/// Verifies the signature and answers a read.
json query(const Settlement& s, const AppRequest& r);

/// Authentication only; shared by execute and query.
void verify_request(const Settlement& s, const AppRequest& r);

} // namespace ccl::settlement
