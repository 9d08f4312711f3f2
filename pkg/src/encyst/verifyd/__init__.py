from .protocol import (ERR_INTERNAL, ERR_MALFORMED, ERR_POOL_EXHAUSTED,
                       ERR_UNAUTHORIZED, ProtocolError, decode_message,
                       encode_message, error_response, image_from_wire,
                       image_to_wire, issue_request, issue_response,
                       predict_request, predict_response, read_message)
from .verify import PairEvidence, VerificationResult, verify
from .servers import (ModelServer, VerificationServer, serve_model,
                      serve_verification)
from .client import ServerError, client_verify, fetch_fingerprint_set, query_model
from .config import ConfigError, load_config, parse_config, token_list
