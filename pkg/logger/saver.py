import os
import time
import datetime
import yaml
from torch.utils.tensorboard import SummaryWriter
from . import utils


class Saver(object):
    def __init__(
            self,
            expdir,
            args=None,
            use_tensorboard=True):

        self.expdir = expdir

        # cold start
        self.init_time = time.time()
        self.last_time = time.time()

        # makedirs
        os.makedirs(self.expdir, exist_ok=True)

        # path
        self.path_log_info = os.path.join(self.expdir, 'log_info.txt')

        # writer
        self.writer = SummaryWriter(os.path.join(self.expdir, 'logs')) if use_tensorboard else None

        # save config
        if args is not None:
            path_config = os.path.join(self.expdir, 'config.yaml')
            with open(path_config, "w") as out_config:
                yaml.safe_dump(utils.to_plain(args), out_config, sort_keys=False)

    def log_info(self, msg):
        '''log method'''
        if isinstance(msg, dict):
            msg_list = []
            for k, v in msg.items():
                if isinstance(v, int):
                    tmp_str = '{}: {:,}'.format(k, v)
                elif isinstance(v, float):
                    tmp_str = '{}: {:.4f}'.format(k, v)
                else:
                    tmp_str = '{}: {}'.format(k, v)
                msg_list.append(tmp_str)
            msg_str = '\n'.join(msg_list)
        else:
            msg_str = msg

        # display
        print(msg_str)

        # save
        with open(self.path_log_info, 'a') as fp:
            fp.write(msg_str + '\n')

    def log_warning(self, msg):
        self.log_info(' [WARNING] ' + msg)

    def log_value(self, values, step):
        if self.writer is None:
            return
        for k, v in values.items():
            self.writer.add_scalar(k, v, step)

    def log_trace(self, name, trace, steps):
        '''one scalar per stored iteration'''
        if self.writer is None:
            return
        for step, v in zip(steps, trace):
            self.writer.add_scalar(name, float(v), int(step))

    def get_total_time(self, to_str=True):
        total_time = time.time() - self.init_time
        if to_str:
            total_time = str(datetime.timedelta(
                seconds=total_time))[:-5]
        return total_time

    def close(self):
        if self.writer is not None:
            self.writer.flush()
            self.writer.close()
