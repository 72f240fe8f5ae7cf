"""Camera source identification by fusing PRNU and model-fingerprint distances."""
