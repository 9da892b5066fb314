import os
import hashlib
import yaml


class DotDict(dict):
    def __getattr__(*args):
        val = dict.get(*args)
        return DotDict(val) if type(val) is dict else val

    __setattr__ = dict.__setitem__
    __delattr__ = dict.__delitem__


def load_config(path_config):
    with open(path_config, "r") as config:
        args = yaml.safe_load(config)
    if not isinstance(args, dict):
        raise ValueError(' [x] Config file is empty or not a mapping: ' + str(path_config))
    args = DotDict(args)
    return args


def to_plain(obj):
    '''DotDict / tuple / numpy scalars -> plain python, safe for yaml.safe_dump'''
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if hasattr(obj, 'item') and not isinstance(obj, (str, bytes)):
        return obj.item()
    return obj


def file_hash(path, chunk_size=1 << 20):
    sha = hashlib.sha256()
    with open(path, 'rb') as fp:
        while True:
            block = fp.read(chunk_size)
            if not block:
                break
            sha.update(block)
    return sha.hexdigest()


def ensure_out_dir(path, force=False):
    '''create the run directory; refuse to reuse a non-empty one without force'''
    if os.path.isdir(path) and os.listdir(path) and not force:
        raise FileExistsError(
            ' [x] Output directory is not empty: {} (use --force to overwrite)'.format(path))
    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise PermissionError(' [x] Output directory is not writable: ' + str(path))
    return path
