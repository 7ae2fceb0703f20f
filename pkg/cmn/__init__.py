from .base_model import BaseModel
from .errors import RelscaleError
