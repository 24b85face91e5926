#include "ecgiot/mqtt/codec.hpp"

#include <algorithm>

namespace ecgiot::mqtt {

namespace {

using Code = ProtocolError::Code;

constexpr std::uint8_t kProtocolLevel = 4;
constexpr std::string_view kProtocolName = "MQTT";

constexpr std::uint8_t kFlagUsername = 0x80;
constexpr std::uint8_t kFlagPassword = 0x40;
constexpr std::uint8_t kFlagWillRetain = 0x20;
constexpr std::uint8_t kFlagWillQos = 0x18;
constexpr std::uint8_t kFlagWill = 0x04;
constexpr std::uint8_t kFlagCleanSession = 0x02;
constexpr std::uint8_t kFlagReserved = 0x01;

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v)
    {
        out_.push_back(static_cast<std::uint8_t>(v >> 8));
        out_.push_back(static_cast<std::uint8_t>(v & 0xFF));
    }
    void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
    void binary(std::string_view s)
    {
        if (s.size() > 0xFFFF)
            throw EncodeError("string field longer than 65535 bytes");
        u16(static_cast<std::uint16_t>(s.size()));
        out_.insert(out_.end(), s.begin(), s.end());
    }
    void str(std::string_view s)
    {
        if (!is_valid_utf8(s))
            throw EncodeError("string field is not valid UTF-8");
        binary(s);
    }
    Bytes take() { return std::move(out_); }

private:
    Bytes out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> body) : body_(body) {}

    std::uint8_t u8()
    {
        need(1);
        return body_[pos_++];
    }
    std::uint16_t u16()
    {
        need(2);
        const auto v = static_cast<std::uint16_t>((body_[pos_] << 8) | body_[pos_ + 1]);
        pos_ += 2;
        return v;
    }
    std::string binary()
    {
        const auto len = u16();
        need(len);
        std::string s(reinterpret_cast<const char*>(body_.data() + pos_), len);
        pos_ += len;
        return s;
    }
    std::string str()
    {
        auto s = binary();
        if (!is_valid_utf8(s))
            throw ProtocolError(Code::MalformedUtf8, "string field is not well-formed UTF-8");
        return s;
    }
    Bytes rest()
    {
        Bytes b(body_.begin() + static_cast<std::ptrdiff_t>(pos_), body_.end());
        pos_ = body_.size();
        return b;
    }
    bool done() const { return pos_ == body_.size(); }
    void expect_done(const char* what) const
    {
        if (!done())
            throw ProtocolError(Code::MalformedPacket, std::string("trailing bytes in ") + what);
    }

private:
    void need(std::size_t n) const
    {
        if (body_.size() - pos_ < n)
            throw ProtocolError(Code::MalformedPacket, "packet body shorter than its fields");
    }

    std::span<const std::uint8_t> body_;
    std::size_t pos_ = 0;
};

struct Encoded {
    std::uint8_t first;
    Bytes body;
};

Encoded encode_body(const Connect& p)
{
    if (p.password && !p.username)
        throw EncodeError("CONNECT password requires a username");
    Writer w;
    w.str(kProtocolName);
    w.u8(kProtocolLevel);
    std::uint8_t flags = 0;
    if (p.username)
        flags |= kFlagUsername;
    if (p.password)
        flags |= kFlagPassword;
    if (p.clean_session)
        flags |= kFlagCleanSession;
    w.u8(flags);
    w.u16(p.keep_alive);
    w.str(p.client_id);
    if (p.username)
        w.str(*p.username);
    if (p.password)
        w.binary(*p.password);
    return {0x10, w.take()};
}

Encoded encode_body(const Connack& p)
{
    Writer w;
    w.u8(p.session_present ? 1 : 0);
    w.u8(static_cast<std::uint8_t>(p.code));
    return {0x20, w.take()};
}

Encoded encode_body(const Publish& p)
{
    if (p.qos > 1)
        throw EncodeError("QoS 2 is not supported");
    if (!is_valid_topic_name(p.topic))
        throw EncodeError("invalid PUBLISH topic '" + p.topic + "'");
    if (p.qos == 1 && p.packet_id == 0)
        throw EncodeError("QoS 1 PUBLISH needs a non-zero packet id");
    if (p.qos == 0 && (p.packet_id != 0 || p.dup))
        throw EncodeError("QoS 0 PUBLISH carries neither packet id nor DUP");
    Writer w;
    w.str(p.topic);
    if (p.qos > 0)
        w.u16(p.packet_id);
    w.bytes(p.payload);
    const auto first = static_cast<std::uint8_t>(0x30 | (p.dup ? 0x08 : 0) | (p.qos << 1) | (p.retain ? 0x01 : 0));
    return {first, w.take()};
}

Encoded encode_body(const Puback& p)
{
    if (p.packet_id == 0)
        throw EncodeError("PUBACK needs a non-zero packet id");
    Writer w;
    w.u16(p.packet_id);
    return {0x40, w.take()};
}

Encoded encode_body(const Subscribe& p)
{
    if (p.packet_id == 0)
        throw EncodeError("SUBSCRIBE needs a non-zero packet id");
    if (p.subscriptions.empty())
        throw EncodeError("SUBSCRIBE needs at least one topic filter");
    Writer w;
    w.u16(p.packet_id);
    for (const auto& s : p.subscriptions) {
        if (!is_valid_topic_filter(s.filter))
            throw EncodeError("invalid topic filter '" + s.filter + "'");
        if (s.qos > 2)
            throw EncodeError("requested QoS out of range");
        w.str(s.filter);
        w.u8(s.qos);
    }
    return {0x82, w.take()};
}

Encoded encode_body(const Suback& p)
{
    if (p.packet_id == 0)
        throw EncodeError("SUBACK needs a non-zero packet id");
    Writer w;
    w.u16(p.packet_id);
    for (auto rc : p.return_codes) {
        if (rc > 2 && rc != kSubackFailure)
            throw EncodeError("invalid SUBACK return code");
        w.u8(rc);
    }
    return {0x90, w.take()};
}

Encoded encode_body(const Pingreq&) { return {0xC0, {}}; }
Encoded encode_body(const Pingresp&) { return {0xD0, {}}; }
Encoded encode_body(const Disconnect&) { return {0xE0, {}}; }

Packet decode_connect(Reader& r)
{
    if (r.str() != kProtocolName)
        throw ProtocolError(Code::MalformedPacket, "CONNECT protocol name must be 'MQTT'");
    if (r.u8() != kProtocolLevel)
        throw ProtocolError(Code::Unsupported, "only protocol level 4 (MQTT 3.1.1) is supported");
    const std::uint8_t flags = r.u8();
    if (flags & kFlagReserved)
        throw ProtocolError(Code::MalformedPacket, "CONNECT reserved flag must be 0");
    if (flags & (kFlagWill | kFlagWillQos | kFlagWillRetain))
        throw ProtocolError(Code::Unsupported, "will messages are not supported");
    if ((flags & kFlagPassword) && !(flags & kFlagUsername))
        throw ProtocolError(Code::MalformedPacket, "CONNECT password flag without username flag");
    Connect c;
    c.clean_session = flags & kFlagCleanSession;
    c.keep_alive = r.u16();
    c.client_id = r.str();
    if (flags & kFlagUsername)
        c.username = r.str();
    if (flags & kFlagPassword)
        c.password = r.binary();
    r.expect_done("CONNECT");
    return c;
}

Packet decode_body(PacketType type, std::uint8_t flags, std::span<const std::uint8_t> body)
{
    Reader r(body);
    auto require_flags = [&](std::uint8_t expected) {
        if (flags != expected)
            throw ProtocolError(Code::MalformedPacket,
                                std::string("reserved fixed-header flags wrong for ") + packet_type_name(type));
    };
    switch (type) {
    case PacketType::Connect:
        require_flags(0);
        return decode_connect(r);
    case PacketType::Connack: {
        require_flags(0);
        Connack c;
        const auto ack_flags = r.u8();
        if (ack_flags > 1)
            throw ProtocolError(Code::MalformedPacket, "CONNACK reserved flags must be 0");
        c.session_present = ack_flags == 1;
        const auto code = r.u8();
        if (code > 5)
            throw ProtocolError(Code::MalformedPacket, "CONNACK return code out of range");
        c.code = static_cast<ConnackCode>(code);
        r.expect_done("CONNACK");
        return c;
    }
    case PacketType::Publish: {
        Publish p;
        p.dup = flags & 0x08;
        p.qos = (flags >> 1) & 0x03;
        p.retain = flags & 0x01;
        if (p.qos == 3)
            throw ProtocolError(Code::MalformedPacket, "PUBLISH QoS 3 is invalid");
        if (p.qos == 2)
            throw ProtocolError(Code::Unsupported, "QoS 2 is not supported");
        if (p.qos == 0 && p.dup)
            throw ProtocolError(Code::MalformedPacket, "DUP must be 0 for QoS 0");
        p.topic = r.str();
        if (!is_valid_topic_name(p.topic))
            throw ProtocolError(Code::MalformedPacket, "PUBLISH topic must be non-empty and wildcard-free");
        if (p.qos > 0) {
            p.packet_id = r.u16();
            if (p.packet_id == 0)
                throw ProtocolError(Code::MalformedPacket, "QoS 1 PUBLISH packet id must be non-zero");
        }
        p.payload = r.rest();
        return p;
    }
    case PacketType::Puback: {
        require_flags(0);
        Puback a{r.u16()};
        if (a.packet_id == 0)
            throw ProtocolError(Code::MalformedPacket, "PUBACK packet id must be non-zero");
        r.expect_done("PUBACK");
        return a;
    }
    case PacketType::Subscribe: {
        require_flags(0x02);
        Subscribe s;
        s.packet_id = r.u16();
        if (s.packet_id == 0)
            throw ProtocolError(Code::MalformedPacket, "SUBSCRIBE packet id must be non-zero");
        while (!r.done()) {
            Subscription sub;
            sub.filter = r.str();
            if (!is_valid_topic_filter(sub.filter))
                throw ProtocolError(Code::MalformedPacket, "invalid topic filter '" + sub.filter + "'");
            sub.qos = r.u8();
            if (sub.qos > 2)
                throw ProtocolError(Code::MalformedPacket, "SUBSCRIBE requested QoS byte malformed");
            s.subscriptions.push_back(std::move(sub));
        }
        if (s.subscriptions.empty())
            throw ProtocolError(Code::MalformedPacket, "SUBSCRIBE without topic filters");
        return s;
    }
    case PacketType::Suback: {
        require_flags(0);
        Suback s;
        s.packet_id = r.u16();
        if (s.packet_id == 0)
            throw ProtocolError(Code::MalformedPacket, "SUBACK packet id must be non-zero");
        while (!r.done()) {
            const auto rc = r.u8();
            if (rc > 2 && rc != kSubackFailure)
                throw ProtocolError(Code::MalformedPacket, "invalid SUBACK return code");
            s.return_codes.push_back(rc);
        }
        return s;
    }
    case PacketType::Pingreq:
        require_flags(0);
        r.expect_done("PINGREQ");
        return Pingreq{};
    case PacketType::Pingresp:
        require_flags(0);
        r.expect_done("PINGRESP");
        return Pingresp{};
    case PacketType::Disconnect:
        require_flags(0);
        r.expect_done("DISCONNECT");
        return Disconnect{};
    }
    throw ProtocolError(Code::UnknownPacketType, "unknown packet type");
}

std::vector<std::string_view> split_levels(std::string_view s)
{
    std::vector<std::string_view> levels;
    while (true) {
        const auto slash = s.find('/');
        levels.push_back(s.substr(0, slash));
        if (slash == std::string_view::npos)
            break;
        s.remove_prefix(slash + 1);
    }
    return levels;
}

}  // namespace

const char* packet_type_name(PacketType t)
{
    switch (t) {
    case PacketType::Connect: return "CONNECT";
    case PacketType::Connack: return "CONNACK";
    case PacketType::Publish: return "PUBLISH";
    case PacketType::Puback: return "PUBACK";
    case PacketType::Subscribe: return "SUBSCRIBE";
    case PacketType::Suback: return "SUBACK";
    case PacketType::Pingreq: return "PINGREQ";
    case PacketType::Pingresp: return "PINGRESP";
    case PacketType::Disconnect: return "DISCONNECT";
    }
    return "UNKNOWN";
}

PacketType packet_type(const Packet& p)
{
    static constexpr PacketType kByIndex[] = {
        PacketType::Connect, PacketType::Connack,  PacketType::Publish,  PacketType::Puback,     PacketType::Subscribe,
        PacketType::Suback,  PacketType::Pingreq,  PacketType::Pingresp, PacketType::Disconnect,
    };
    return kByIndex[p.index()];
}

Bytes encode_remaining_length(std::uint32_t n)
{
    if (n > kMaxRemainingLength)
        throw EncodeError("remaining length " + std::to_string(n) + " exceeds 268435455");
    Bytes out;
    do {
        auto digit = static_cast<std::uint8_t>(n % 128);
        n /= 128;
        if (n > 0)
            digit |= 0x80;
        out.push_back(digit);
    } while (n > 0);
    return out;
}

std::optional<RemainingLength> decode_remaining_length(std::span<const std::uint8_t> bytes)
{
    std::uint32_t value = 0;
    std::uint32_t multiplier = 1;
    for (std::size_t i = 0; i < 4; ++i) {
        if (i >= bytes.size())
            return std::nullopt;
        value += (bytes[i] & 0x7Fu) * multiplier;
        if (!(bytes[i] & 0x80))
            return RemainingLength{value, i + 1};
        multiplier *= 128;
    }
    throw ProtocolError(Code::MalformedPacket, "remaining length longer than four bytes");
}

Bytes encode_packet(const Packet& p)
{
    auto [first, body] = std::visit([](const auto& pkt) { return encode_body(pkt); }, p);
    if (body.size() > kMaxRemainingLength)
        throw EncodeError("packet body exceeds the maximum remaining length");
    Bytes out;
    out.reserve(body.size() + 5);
    out.push_back(first);
    const auto rl = encode_remaining_length(static_cast<std::uint32_t>(body.size()));
    out.insert(out.end(), rl.begin(), rl.end());
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

std::optional<Decoded> decode_packet(std::span<const std::uint8_t> bytes, std::size_t max_packet_size)
{
    if (bytes.empty())
        return std::nullopt;
    const std::uint8_t type_bits = bytes[0] >> 4;
    const std::uint8_t flags = bytes[0] & 0x0F;
    switch (type_bits) {
    case 1: case 2: case 3: case 4: case 8: case 9: case 12: case 13: case 14:
        break;
    case 5: case 6: case 7:
        throw ProtocolError(Code::Unsupported, "QoS 2 flow packets are not supported");
    case 10: case 11:
        throw ProtocolError(Code::Unsupported, "UNSUBSCRIBE is not supported");
    default:
        throw ProtocolError(Code::UnknownPacketType, "unknown packet type " + std::to_string(type_bits));
    }
    const auto rl = decode_remaining_length(bytes.subspan(1));
    if (!rl)
        return std::nullopt;
    const std::size_t total = 1 + rl->size + rl->value;
    if (total > max_packet_size)
        throw ProtocolError(Code::PacketTooLarge,
                            "packet of " + std::to_string(total) + " bytes exceeds the " +
                                std::to_string(max_packet_size) + "-byte limit");
    if (bytes.size() < total)
        return std::nullopt;
    auto packet = decode_body(static_cast<PacketType>(type_bits), flags, bytes.subspan(1 + rl->size, rl->value));
    return Decoded{std::move(packet), total};
}

bool is_valid_utf8(std::string_view s)
{
    std::size_t i = 0;
    const auto n = s.size();
    while (i < n) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t len;
        std::uint32_t cp;
        if (c == 0x00)
            return false;  // U+0000 is forbidden in MQTT strings
        if (c < 0x80) {
            ++i;
            continue;
        }
        if ((c & 0xE0) == 0xC0) {
            len = 2;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            len = 3;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            len = 4;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + len > n)
            return false;
        for (std::size_t k = 1; k < len; ++k) {
            const auto cc = static_cast<unsigned char>(s[i + k]);
            if ((cc & 0xC0) != 0x80)
                return false;
            cp = (cp << 6) | (cc & 0x3F);
        }
        const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000);
        if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))
            return false;
        i += len;
    }
    return true;
}

bool is_valid_topic_name(std::string_view topic)
{
    return !topic.empty() && topic.size() <= 0xFFFF && topic.find_first_of("+#") == std::string_view::npos &&
           is_valid_utf8(topic);
}

bool is_valid_topic_filter(std::string_view filter)
{
    if (filter.empty() || filter.size() > 0xFFFF || !is_valid_utf8(filter))
        return false;
    const auto levels = split_levels(filter);
    for (std::size_t i = 0; i < levels.size(); ++i) {
        const auto level = levels[i];
        if (level.find('#') != std::string_view::npos && (level != "#" || i + 1 != levels.size()))
            return false;
        if (level.find('+') != std::string_view::npos && level != "+")
            return false;
    }
    return true;
}

bool topic_matches(std::string_view filter, std::string_view topic)
{
    const auto f = split_levels(filter);
    const auto t = split_levels(topic);
    // Wildcards at the first level do not match system topics.
    if (!topic.empty() && topic.front() == '$' && (f.front() == "+" || f.front() == "#"))
        return false;
    std::size_t i = 0;
    for (; i < f.size(); ++i) {
        if (f[i] == "#")
            return true;
        if (i >= t.size())
            return false;
        if (f[i] != "+" && f[i] != t[i])
            return false;
    }
    return i == t.size();
}

}  // namespace ecgiot::mqtt
