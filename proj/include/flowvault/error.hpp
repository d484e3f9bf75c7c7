#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace flowvault {

// Base of every error the engine raises. The CLI maps UsageError to exit
// code 1 and every other Error to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed external input (pcap headers, serialized records).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Stored data failed validation (bad magic, checksum, length).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class StorageError : public Error {
 public:
  using Error::Error;
};

// A read hit data that has been evicted or never became durable.
class DataUnavailable : public Error {
 public:
  using Error::Error;
};

}  // namespace flowvault
