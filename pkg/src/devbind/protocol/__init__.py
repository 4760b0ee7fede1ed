from .session import (AUTHENTICATED, CHALLENGED, DELIVERED, FAILED, IDLE, PROTOCOL_CONFIG, DeviceNode,
                      DeviceSession, EnrollmentError, Provider, ProviderSession, challenge_id,
                      device_receive_model, device_request, device_verify_and_reply, nonce_mask,
                      provider_auth, provider_deliver, register, run_session)
from .store import CrpRecord, CrpStore, DeviceStore
from .transport import deploy, memory_pair
from .wire import FrameDecoder, decode_frame, encode_frame, protocol_hash

__all__ = [
    "AUTHENTICATED", "CHALLENGED", "DELIVERED", "FAILED", "IDLE", "PROTOCOL_CONFIG", "CrpRecord",
    "CrpStore", "DeviceNode", "DeviceSession", "DeviceStore", "EnrollmentError", "FrameDecoder",
    "Provider", "ProviderSession", "challenge_id", "decode_frame", "deploy", "device_receive_model",
    "device_request", "device_verify_and_reply", "encode_frame", "memory_pair", "nonce_mask",
    "protocol_hash", "provider_auth", "provider_deliver", "register", "run_session",
]
