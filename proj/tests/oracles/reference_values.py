"""Independent reference computations whose outputs are frozen into the C++ tests."""
import hashlib
import struct


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def ip_bytes(text: str) -> bytes:
    return bytes(int(x) for x in text.split("."))


POLY = 0xBFE6B8A5BF378D83  # degree 63


def polymod(v: int) -> int:
    # long division over GF(2)
    while v.bit_length() > 63:
        v ^= POLY << (v.bit_length() - 64)
    return v


def rabin(data: bytes) -> int:
    v = 0
    for b in data:
        v = (v << 8) | b
    return polymod(v)


if __name__ == "__main__":
    for ip in ["10.0.0.1", "10.0.0.2", "192.168.1.1", "0.0.0.0", "255.255.255.255"]:
        b = ip_bytes(ip)
        print("ip", ip, hex(fnv1a64(b)), fnv1a64(b) % 65536)
    for port in [0, 53, 80, 443, 5555, 65535]:
        b = struct.pack(">H", port)
        print("port", port, hex(fnv1a64(b)), fnv1a64(b) % 65536)
    print("fnv empty", hex(fnv1a64(b"")), "a", hex(fnv1a64(b"a")), "foobar", hex(fnv1a64(b"foobar")))
    msg = bytes(range(48))
    print("rabin 0..47", hex(rabin(msg)))
    msg2 = b"The quick brown fox jumps over the lazy dog"
    print("rabin fox", hex(rabin(msg2)))
    long = bytes((i * 37 + 11) & 0xFF for i in range(200))
    print("rabin last48 of pattern", hex(rabin(long[-48:])))
    print("sha1 abc", hashlib.sha1(b"abc").hexdigest())
