from .attention import CBAM3d, EdgeAttentionModule, GatedConvBlock, ResidualBlock
from .ear import EARNet, parameter_checksum
from .layers import DecoderLayer, EncoderLayer, FrequencyEnhancement

__all__ = [
    "CBAM3d", "DecoderLayer", "EARNet", "EdgeAttentionModule", "EncoderLayer",
    "FrequencyEnhancement", "GatedConvBlock", "ResidualBlock", "parameter_checksum",
]
