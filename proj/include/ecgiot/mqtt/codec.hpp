#pragma once

// MQTT 3.1.1 wire codec for the subset used here: CONNECT, CONNACK, PUBLISH,
// PUBACK, SUBSCRIBE, SUBACK, PINGREQ, PINGRESP and DISCONNECT at QoS 0/1.
// No wills, no QoS 2.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ecgiot/error.hpp"

namespace ecgiot::mqtt {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint32_t kMaxRemainingLength = 268'435'455;
inline constexpr std::size_t kDefaultMaxPacketSize = 256 * 1024;

enum class PacketType : std::uint8_t {
    Connect = 1,
    Connack = 2,
    Publish = 3,
    Puback = 4,
    Subscribe = 8,
    Suback = 9,
    Pingreq = 12,
    Pingresp = 13,
    Disconnect = 14,
};

const char* packet_type_name(PacketType t);

// Raised by decode on a protocol violation. "Need more bytes" is not an error
// and is reported through an empty optional instead.
class ProtocolError : public Error {
public:
    enum class Code { UnknownPacketType, MalformedPacket, MalformedUtf8, PacketTooLarge, Unsupported };

    ProtocolError(Code code, const std::string& detail) : Error(detail), code_(code) {}
    Code code() const noexcept { return code_; }

private:
    Code code_;
};

class EncodeError : public Error {
public:
    using Error::Error;
};

struct Connect {
    std::string client_id;
    std::uint16_t keep_alive = 60;  // seconds
    bool clean_session = true;
    std::optional<std::string> username;
    std::optional<std::string> password;

    friend bool operator==(const Connect&, const Connect&) = default;
};

enum class ConnackCode : std::uint8_t {
    Accepted = 0,
    UnacceptableProtocol = 1,
    IdentifierRejected = 2,
    ServerUnavailable = 3,
    BadCredentials = 4,
    NotAuthorized = 5,
};

struct Connack {
    bool session_present = false;
    ConnackCode code = ConnackCode::Accepted;

    friend bool operator==(const Connack&, const Connack&) = default;
};

struct Publish {
    std::string topic;
    Bytes payload;
    std::uint8_t qos = 0;
    bool dup = false;
    bool retain = false;
    std::uint16_t packet_id = 0;  // present on the wire only when qos > 0

    std::string_view payload_view() const
    {
        return {reinterpret_cast<const char*>(payload.data()), payload.size()};
    }

    friend bool operator==(const Publish&, const Publish&) = default;
};

struct Puback {
    std::uint16_t packet_id = 0;
    friend bool operator==(const Puback&, const Puback&) = default;
};

struct Subscription {
    std::string filter;
    std::uint8_t qos = 0;
    friend bool operator==(const Subscription&, const Subscription&) = default;
};

struct Subscribe {
    std::uint16_t packet_id = 0;
    std::vector<Subscription> subscriptions;
    friend bool operator==(const Subscribe&, const Subscribe&) = default;
};

inline constexpr std::uint8_t kSubackFailure = 0x80;

struct Suback {
    std::uint16_t packet_id = 0;
    std::vector<std::uint8_t> return_codes;
    friend bool operator==(const Suback&, const Suback&) = default;
};

struct Pingreq {
    friend bool operator==(const Pingreq&, const Pingreq&) = default;
};
struct Pingresp {
    friend bool operator==(const Pingresp&, const Pingresp&) = default;
};
struct Disconnect {
    friend bool operator==(const Disconnect&, const Disconnect&) = default;
};

using Packet = std::variant<Connect, Connack, Publish, Puback, Subscribe, Suback, Pingreq, Pingresp, Disconnect>;

PacketType packet_type(const Packet& p);

// Base-128 varint, least significant group first. 1-4 bytes.
Bytes encode_remaining_length(std::uint32_t n);

struct RemainingLength {
    std::uint32_t value;
    std::size_t size;  // bytes consumed
};
// nullopt when the input ends mid-varint; ProtocolError past four bytes.
std::optional<RemainingLength> decode_remaining_length(std::span<const std::uint8_t> bytes);

Bytes encode_packet(const Packet& p);

struct Decoded {
    Packet packet;
    std::size_t consumed;
};
// nullopt means the input holds only a prefix of a packet.
std::optional<Decoded> decode_packet(std::span<const std::uint8_t> bytes,
                                     std::size_t max_packet_size = kDefaultMaxPacketSize);

bool is_valid_utf8(std::string_view s);

// Topic names carry no wildcards; filters may use '+' for a whole level and
// '#' as the whole last level.
bool is_valid_topic_name(std::string_view topic);
bool is_valid_topic_filter(std::string_view filter);
bool topic_matches(std::string_view filter, std::string_view topic);

}  // namespace ecgiot::mqtt
